#include "simpsi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <unordered_set>

namespace simpsi::ad {

int numel(const Shape& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

thread_local bool g_grad_enabled = true;

void validate_shape(const Shape& shape, const char* ctx) {
  for (int d : shape) {
    if (d < 1) throw std::invalid_argument(std::string(ctx) + ": dims must be >= 1, got " + shape_str(shape));
  }
}

std::vector<size_t> contiguous_strides(const Shape& s) {
  std::vector<size_t> st(s.size());
  size_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= static_cast<size_t>(s[static_cast<size_t>(i)]);
  }
  return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (size_t i = 0; i < nd; ++i) {
    const int ad = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const int bd = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (ad != bd && ad != 1 && bd != 1) {
      throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) +
                                  " and " + shape_str(b) + " do not broadcast");
    }
    out[i] = std::max(ad, bd);
  }
  return out;
}

// Strides of `in` viewed in `out` coordinates (0 on broadcast dims).
std::vector<size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const size_t pad = out.size() - in.size();
  auto in_str = contiguous_strides(in);
  std::vector<size_t> st(out.size(), 0);
  for (size_t i = 0; i < in.size(); ++i) {
    st[pad + i] = (in[i] == 1 && out[pad + i] > 1) ? 0 : in_str[i];
  }
  return st;
}

// f(out_flat, a_offset, b_offset) over every element of out.
template <class F>
void for_each_broadcast2(const Shape& out, const std::vector<size_t>& astr,
                         const std::vector<size_t>& bstr, F&& f) {
  const int nd = static_cast<int>(out.size());
  size_t total = 1;
  for (int d : out) total *= static_cast<size_t>(d);
  if (nd == 0) {
    if (total) f(size_t{0}, size_t{0}, size_t{0});
    return;
  }
  std::vector<int> coord(static_cast<size_t>(nd), 0);
  size_t aoff = 0, boff = 0;
  for (size_t i = 0; i < total; ++i) {
    f(i, aoff, boff);
    for (int d = nd - 1; d >= 0; --d) {
      const auto du = static_cast<size_t>(d);
      ++coord[du];
      aoff += astr[du];
      boff += bstr[du];
      if (coord[du] < out[du]) break;
      coord[du] = 0;
      aoff -= astr[du] * static_cast<size_t>(out[du]);
      boff -= bstr[du] * static_cast<size_t>(out[du]);
    }
  }
}

void check_finite_out(const char* name, const std::vector<float>& v) {
  for (float x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error(std::string(name) + ": non-finite output");
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill, bool requires_grad) {
  validate_shape(shape, "Tensor");
  impl_ = std::make_shared<TensorImpl>();
  impl_->values.assign(static_cast<size_t>(ad::numel(shape)), fill);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad) {
  validate_shape(shape, "Tensor");
  if (values.size() != static_cast<size_t>(ad::numel(shape))) {
    throw std::invalid_argument("Tensor: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(float v) { return Tensor(Shape{}, std::vector<float>{v}); }

float Tensor::item() const {
  if (!impl_ || impl_->values.size() != 1) {
    throw std::invalid_argument("Tensor::item: not a scalar");
  }
  return impl_->values[0];
}

std::vector<float>& Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void accumulate_grad(const Tensor& t, const float* g, size_t n) {
  if (!t.defined()) return;
  TensorImpl* impl = t.impl();
  if (!impl->requires_grad) return;
  if (impl->grad.empty()) impl->grad.assign(impl->values.size(), 0.0f);
  float* dst = impl->grad.data();
  for (size_t i = 0; i < n; ++i) dst[i] += g[i];
}

void accumulate_grad(const Tensor& t, const std::vector<float>& g) {
  accumulate_grad(t, g.data(), g.size());
}

Tensor custom_op(const char* name, std::vector<Tensor> inputs, Shape out_shape,
                 std::vector<float> out_values,
                 std::function<void(const std::vector<float>&)> backward_fn) {
  check_finite_out(name, out_values);
  bool need = g_grad_enabled && backward_fn != nullptr;
  if (need) {
    need = false;
    for (const auto& t : inputs) {
      if (t.defined() && t.requires_grad()) {
        need = true;
        break;
      }
    }
  }
  Tensor out(std::move(out_shape), std::move(out_values), need);
  if (need) {
    out.impl()->node = std::make_shared<Node>(
        Node{name, std::move(inputs), std::move(backward_fn), false});
  }
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a defined scalar");
  }
  TensorImpl* root = loss.impl();
  if (!root->requires_grad) {
    throw std::runtime_error("backward: loss does not require grad");
  }

  std::vector<TensorImpl*> order;  // post-order: children before parents
  if (root->node) {
    std::unordered_set<TensorImpl*> seen{root};
    struct Frame {
      TensorImpl* t;
      size_t child = 0;
    };
    std::vector<Frame> stack{{root}};
    while (!stack.empty()) {
      Frame& f = stack.back();
      Node* n = f.t->node.get();
      if (n->consumed) {
        throw std::runtime_error("backward: tape already consumed; run a new forward");
      }
      if (f.child < n->inputs.size()) {
        TensorImpl* c = n->inputs[f.child].impl();
        ++f.child;
        if (c && c->node && !seen.count(c)) {
          seen.insert(c);
          stack.push_back({c});
        }
      } else {
        order.push_back(f.t);
        stack.pop_back();
      }
    }
  }

  root->grad.assign(1, 1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    Node* n = t->node.get();
    n->consumed = true;
    if (!t->grad.empty()) n->backward(t->grad);
    n->backward = nullptr;  // drop closures (and their captured activations)
    if (t != root) {
      t->grad.clear();
      t->grad.shrink_to_fit();
    }
  }
}

namespace {

enum class BinOp { kAdd, kSub, kMul };

Tensor binary_op(const char* name, BinOp kind, const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined()) throw std::invalid_argument(std::string(name) + ": undefined operand");
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  const size_t total = static_cast<size_t>(numel(out_shape));
  std::vector<float> out(total);

  const bool same = a.shape() == b.shape();
  const float* av = a.values().data();
  const float* bv = b.values().data();
  if (same) {
    switch (kind) {
      case BinOp::kAdd: for (size_t i = 0; i < total; ++i) out[i] = av[i] + bv[i]; break;
      case BinOp::kSub: for (size_t i = 0; i < total; ++i) out[i] = av[i] - bv[i]; break;
      case BinOp::kMul: for (size_t i = 0; i < total; ++i) out[i] = av[i] * bv[i]; break;
    }
  } else {
    const auto astr = broadcast_strides(a.shape(), out_shape);
    const auto bstr = broadcast_strides(b.shape(), out_shape);
    switch (kind) {
      case BinOp::kAdd:
        for_each_broadcast2(out_shape, astr, bstr,
                            [&](size_t i, size_t ao, size_t bo) { out[i] = av[ao] + bv[bo]; });
        break;
      case BinOp::kSub:
        for_each_broadcast2(out_shape, astr, bstr,
                            [&](size_t i, size_t ao, size_t bo) { out[i] = av[ao] - bv[bo]; });
        break;
      case BinOp::kMul:
        for_each_broadcast2(out_shape, astr, bstr,
                            [&](size_t i, size_t ao, size_t bo) { out[i] = av[ao] * bv[bo]; });
        break;
    }
  }

  Tensor ta = a, tb = b;
  auto bw = [name, kind, ta, tb, out_shape](const std::vector<float>& g) {
    const bool same_shapes = ta.shape() == tb.shape();
    const bool need_a = ta.requires_grad();
    const bool need_b = tb.requires_grad();
    if (same_shapes) {
      const size_t n = g.size();
      if (need_a) {
        auto& ga = ta.grad();
        switch (kind) {
          case BinOp::kAdd:
          case BinOp::kSub: for (size_t i = 0; i < n; ++i) ga[i] += g[i]; break;
          case BinOp::kMul: {
            const float* bv2 = tb.values().data();
            for (size_t i = 0; i < n; ++i) ga[i] += g[i] * bv2[i];
            break;
          }
        }
      }
      if (need_b) {
        auto& gb = tb.grad();
        switch (kind) {
          case BinOp::kAdd: for (size_t i = 0; i < n; ++i) gb[i] += g[i]; break;
          case BinOp::kSub: for (size_t i = 0; i < n; ++i) gb[i] -= g[i]; break;
          case BinOp::kMul: {
            const float* av2 = ta.values().data();
            for (size_t i = 0; i < n; ++i) gb[i] += g[i] * av2[i];
            break;
          }
        }
      }
      return;
    }
    const auto astr = broadcast_strides(ta.shape(), out_shape);
    const auto bstr = broadcast_strides(tb.shape(), out_shape);
    float* ga = need_a ? ta.grad().data() : nullptr;
    float* gb = need_b ? tb.grad().data() : nullptr;
    const float* av2 = ta.values().data();
    const float* bv2 = tb.values().data();
    for_each_broadcast2(out_shape, astr, bstr, [&](size_t i, size_t ao, size_t bo) {
      switch (kind) {
        case BinOp::kAdd:
          if (ga) ga[ao] += g[i];
          if (gb) gb[bo] += g[i];
          break;
        case BinOp::kSub:
          if (ga) ga[ao] += g[i];
          if (gb) gb[bo] -= g[i];
          break;
        case BinOp::kMul:
          if (ga) ga[ao] += g[i] * bv2[bo];
          if (gb) gb[bo] += g[i] * av2[ao];
          break;
      }
    });
  };
  return custom_op(name, {a, b}, out_shape, std::move(out), std::move(bw));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", BinOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", BinOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", BinOp::kMul, a, b); }

Tensor add_scalar(const Tensor& a, float s) {
  std::vector<float> out(a.values());
  for (auto& v : out) v += s;
  Tensor ta = a;
  return custom_op("add_scalar", {a}, a.shape(), std::move(out),
                   [ta](const std::vector<float>& g) { accumulate_grad(ta, g); });
}

Tensor mul_scalar(const Tensor& a, float s) {
  std::vector<float> out(a.values());
  for (auto& v : out) v *= s;
  Tensor ta = a;
  return custom_op("mul_scalar", {a}, a.shape(), std::move(out),
                   [ta, s](const std::vector<float>& g) {
                     if (!ta.requires_grad()) return;
                     auto& ga = ta.grad();
                     for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
                   });
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.values());
  for (auto& v : out) v = v > 0.0f ? v : 0.0f;
  Tensor tx = x;
  return custom_op("relu", {x}, x.shape(), std::move(out),
                   [tx](const std::vector<float>& g) {
                     if (!tx.requires_grad()) return;
                     auto& gx = tx.grad();
                     const float* xv = tx.values().data();
                     for (size_t i = 0; i < g.size(); ++i) {
                       if (xv[i] > 0.0f) gx[i] += g[i];
                     }
                   });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<float> out(x.values().size());
  const float* xv = x.values().data();
  for (size_t i = 0; i < out.size(); ++i) {
    const float v = xv[i];
    if (v >= 0.0f) {
      out[i] = 1.0f / (1.0f + std::exp(-v));
    } else {
      const float e = std::exp(v);
      out[i] = e / (1.0f + e);
    }
  }
  Tensor tx = x;
  std::vector<float> y = out;  // saved for backward
  return custom_op("sigmoid", {x}, x.shape(), std::move(out),
                   [tx, y = std::move(y)](const std::vector<float>& g) {
                     if (!tx.requires_grad()) return;
                     auto& gx = tx.grad();
                     for (size_t i = 0; i < g.size(); ++i) {
                       gx[i] += g[i] * y[i] * (1.0f - y[i]);
                     }
                   });
}

Tensor mean(const Tensor& x, std::vector<int> axes) {
  const int nd = x.ndim();
  if (axes.empty()) {
    axes.resize(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) axes[static_cast<size_t>(i)] = i;
  }
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  std::vector<bool> reduced(static_cast<size_t>(nd), false);
  for (int a : axes) {
    if (a < 0 || a >= nd) {
      throw std::invalid_argument("mean: axis " + std::to_string(a) + " out of range for " +
                                  shape_str(x.shape()));
    }
    reduced[static_cast<size_t>(a)] = true;
  }

  Shape out_shape;
  long long count = 1;
  for (int i = 0; i < nd; ++i) {
    if (reduced[static_cast<size_t>(i)]) {
      count *= x.shape()[static_cast<size_t>(i)];
    } else {
      out_shape.push_back(x.shape()[static_cast<size_t>(i)]);
    }
  }

  // input-dim stride into the output array (0 on reduced dims)
  const auto out_str = contiguous_strides(out_shape);
  std::vector<size_t> map_str(static_cast<size_t>(nd), 0);
  {
    size_t oi = 0;
    for (int i = 0; i < nd; ++i) {
      if (!reduced[static_cast<size_t>(i)]) map_str[static_cast<size_t>(i)] = out_str[oi++];
    }
  }

  std::vector<float> out(static_cast<size_t>(numel(out_shape)), 0.0f);
  const float* xv = x.values().data();
  const auto in_shape = x.shape();
  {
    std::vector<int> coord(static_cast<size_t>(nd), 0);
    size_t ooff = 0;
    const size_t total = x.values().size();
    for (size_t i = 0; i < total; ++i) {
      out[ooff] += xv[i];
      for (int d = nd - 1; d >= 0; --d) {
        const auto du = static_cast<size_t>(d);
        ++coord[du];
        ooff += map_str[du];
        if (coord[du] < in_shape[du]) break;
        coord[du] = 0;
        ooff -= map_str[du] * static_cast<size_t>(in_shape[du]);
      }
    }
  }
  const float inv = 1.0f / static_cast<float>(count);
  for (auto& v : out) v *= inv;

  Tensor tx = x;
  auto bw = [tx, map_str, inv](const std::vector<float>& g) {
    if (!tx.requires_grad()) return;
    auto& gx = tx.grad();
    const auto& in_shape = tx.shape();
    const int nd2 = static_cast<int>(in_shape.size());
    std::vector<int> coord(static_cast<size_t>(nd2), 0);
    size_t ooff = 0;
    const size_t total = gx.size();
    for (size_t i = 0; i < total; ++i) {
      gx[i] += g[ooff] * inv;
      for (int d = nd2 - 1; d >= 0; --d) {
        const auto du = static_cast<size_t>(d);
        ++coord[du];
        ooff += map_str[du];
        if (coord[du] < in_shape[du]) break;
        coord[du] = 0;
        ooff -= map_str[du] * static_cast<size_t>(in_shape[du]);
      }
    }
  };
  return custom_op("mean", {x}, std::move(out_shape), std::move(out), std::move(bw));
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  validate_shape(new_shape, "reshape");
  if (numel(new_shape) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(new_shape));
  }
  Tensor tx = x;
  return custom_op("reshape", {x}, std::move(new_shape), x.values(),
                   [tx](const std::vector<float>& g) { accumulate_grad(tx, g); });
}

Tensor transpose(const Tensor& x, std::vector<int> perm) {
  const int nd = x.ndim();
  if (static_cast<int>(perm.size()) != nd) {
    throw std::invalid_argument("transpose: perm rank mismatch for " + shape_str(x.shape()));
  }
  std::vector<bool> used(static_cast<size_t>(nd), false);
  for (int p : perm) {
    if (p < 0 || p >= nd || used[static_cast<size_t>(p)]) {
      throw std::invalid_argument("transpose: invalid permutation");
    }
    used[static_cast<size_t>(p)] = true;
  }

  Shape out_shape(static_cast<size_t>(nd));
  for (int d = 0; d < nd; ++d) out_shape[static_cast<size_t>(d)] = x.shape()[static_cast<size_t>(perm[static_cast<size_t>(d)])];

  const auto in_str = contiguous_strides(x.shape());
  std::vector<size_t> src_str(static_cast<size_t>(nd));
  for (int d = 0; d < nd; ++d) src_str[static_cast<size_t>(d)] = in_str[static_cast<size_t>(perm[static_cast<size_t>(d)])];

  const size_t total = x.values().size();
  std::vector<float> out(total);
  const float* xv = x.values().data();
  {
    std::vector<int> coord(static_cast<size_t>(nd), 0);
    size_t ioff = 0;
    for (size_t i = 0; i < total; ++i) {
      out[i] = xv[ioff];
      for (int d = nd - 1; d >= 0; --d) {
        const auto du = static_cast<size_t>(d);
        ++coord[du];
        ioff += src_str[du];
        if (coord[du] < out_shape[du]) break;
        coord[du] = 0;
        ioff -= src_str[du] * static_cast<size_t>(out_shape[du]);
      }
    }
  }

  Tensor tx = x;
  auto bw = [tx, out_shape, src_str, nd](const std::vector<float>& g) {
    if (!tx.requires_grad()) return;
    auto& gx = tx.grad();
    std::vector<int> coord(static_cast<size_t>(nd), 0);
    size_t ioff = 0;
    for (size_t i = 0; i < g.size(); ++i) {
      gx[ioff] += g[i];
      for (int d = nd - 1; d >= 0; --d) {
        const auto du = static_cast<size_t>(d);
        ++coord[du];
        ioff += src_str[du];
        if (coord[du] < out_shape[du]) break;
        coord[du] = 0;
        ioff -= src_str[du] * static_cast<size_t>(out_shape[du]);
      }
    }
  };
  return custom_op("transpose", {x}, std::move(out_shape), std::move(out), std::move(bw));
}

Tensor select(const Tensor& x, int flat_index) {
  if (flat_index < 0 || flat_index >= x.numel()) {
    throw std::invalid_argument("select: index " + std::to_string(flat_index) +
                                " out of range for " + shape_str(x.shape()));
  }
  Tensor tx = x;
  return custom_op("select", {x}, Shape{}, {x.values()[static_cast<size_t>(flat_index)]},
                   [tx, flat_index](const std::vector<float>& g) {
                     if (!tx.requires_grad()) return;
                     tx.grad()[static_cast<size_t>(flat_index)] += g[0];
                   });
}

Tensor input_gradient(const std::function<Tensor(const Tensor&)>& logit_fn,
                      const Tensor& input, int target_index) {
  Tensor leaf(input.shape(), input.values(), true);
  Tensor out = logit_fn(leaf);
  if (!out.defined()) throw std::invalid_argument("input_gradient: logit_fn returned nothing");
  if (target_index < 0 || target_index >= out.numel()) {
    throw std::invalid_argument("input_gradient: target index " + std::to_string(target_index) +
                                " out of range for logits " + shape_str(out.shape()));
  }
  Tensor s = select(out, target_index);
  backward(s);
  return Tensor(input.shape(), leaf.grad(), false);
}

}  // namespace simpsi::ad
