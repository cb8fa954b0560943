#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace simpsi::ad {

using Shape = std::vector<int>;

int numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // producing op; null for leaves
};

// Value-semantics handle to a shared array that can participate in
// reverse-mode differentiation. Ops build a define-by-run tape; backward()
// walks it once and releases it.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float v);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int numel() const { return static_cast<int>(impl_->values.size()); }

  // Tensor is a shared handle: const protects the handle, not the pointee.
  std::vector<float>& values() const { return impl_->values; }
  float item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

  // Gradient accumulated by the last backward(); zeros if never touched.
  std::vector<float>& grad() const;  // allocates zeros on first access
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad();

  TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct Node {
  const char* name;
  std::vector<Tensor> inputs;
  std::function<void(const std::vector<float>& out_grad)> backward;
  bool consumed = false;
};

// Thread-local gradient mode; ops record no tape while disabled.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Runs reverse-mode accumulation from a scalar loss. The tape is consumed:
// a second backward() without a fresh forward throws.
void backward(const Tensor& loss);

// Extension point: wrap an externally computed forward result as a tape node.
// `backward_fn` receives the output gradient and must accumulate into the
// inputs' grads (use accumulate_grad). Do not capture the returned Tensor
// inside the closure; that would cycle the graph.
Tensor custom_op(const char* name, std::vector<Tensor> inputs, Shape out_shape,
                 std::vector<float> out_values,
                 std::function<void(const std::vector<float>& out_grad)> backward_fn);

// Adds g into t's grad buffer iff t participates in differentiation.
void accumulate_grad(const Tensor& t, const float* g, size_t n);
void accumulate_grad(const Tensor& t, const std::vector<float>& g);

// Elementwise with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Batched matrix product: [..., M, K] x [..., K, N] with broadcastable
// leading dims (a bare 2-D operand broadcasts over any batch).
Tensor matmul(const Tensor& a, const Tensor& b);

// x [N, Cin, L], w [Cout, Cin, K], optional bias [Cout] (pass Tensor() for
// none); zero padding on both ends.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding);

// Mean over the given axes (dropped from the shape); axes may be empty
// meaning all axes (scalar output).
Tensor mean(const Tensor& x, std::vector<int> axes = {});

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor transpose(const Tensor& x, std::vector<int> perm);

// Softmax over the last axis.
Tensor softmax(const Tensor& x);

// logits [N, M], labels size N in [0, M); mean cross-entropy via log-sum-exp.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Scalar view of one element (by flat index).
Tensor select(const Tensor& x, int flat_index);

// x [N, C, L]; gamma/beta [C]; running stats are buffers of length C mutated
// only when training=true (biased variance, new = (1-momentum)*old +
// momentum*batch). Eval mode is a fixed affine map of x.
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   std::vector<float>& running_mean, std::vector<float>& running_var,
                   bool training, float momentum = 0.1f, float eps = 1e-5f);

// Normalizes over the last axis; gamma/beta shaped [last_dim].
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 float eps = 1e-5f);

// x [..., in], w [out, in], optional b [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// d logit[target_index] / d input, as a tensor shaped like `input`. Runs
// its own forward+backward; `input`'s stored grad is left untouched. Callers
// must freeze model parameters around the call if their grads matter.
Tensor input_gradient(const std::function<Tensor(const Tensor&)>& logit_fn,
                      const Tensor& input, int target_index);

}  // namespace simpsi::ad
