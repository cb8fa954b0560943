#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simpsi/rng.hpp"
#include "simpsi/tensor.hpp"

namespace simpsi::nn {

// Ordered registry of named tensors. `trainable` entries are parameters the
// optimizer updates; the rest are buffers (e.g. batchnorm running stats)
// that checkpoints must still carry. Registration order is the checkpoint
// blob order, so construction must be deterministic.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    ad::Tensor tensor;
    bool trainable;
  };

  // Returned handles alias the stored entry (shared impl), safe across growth.
  ad::Tensor add(const std::string& name, ad::Tensor t);
  ad::Tensor add_buffer(const std::string& name, ad::Tensor t);

  const std::vector<Entry>& entries() const { return entries_; }
  ad::Tensor* find(const std::string& name);
  const ad::Tensor* find(const std::string& name) const;

  // Trainable floats only.
  std::int64_t parameter_count() const;

  void zero_grad();
  void set_requires_grad(bool flag);  // trainable entries only

 private:
  ad::Tensor insert(const std::string& name, ad::Tensor t, bool trainable);
  std::vector<Entry> entries_;
};

// Temporarily detaches all trainable entries from differentiation; restores
// the previous flags on destruction.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParameterSet& params);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParameterSet& params_;
  std::vector<bool> saved_;
};

// U(-b, b) with b = sqrt(6 / fan_in).
ad::Tensor kaiming_uniform(ad::Shape shape, int fan_in, rng::RngStream& rng);

struct Linear {
  ad::Tensor w, b;

  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, int in, int out,
         rng::RngStream& rng);
  ad::Tensor operator()(const ad::Tensor& x) const { return ad::linear(x, w, b); }
};

struct Conv1d {
  ad::Tensor w, b;
  int stride = 1;
  int padding = 0;

  Conv1d() = default;
  Conv1d(ParameterSet& params, const std::string& name, int in_ch, int out_ch,
         int kernel, int stride, int padding, rng::RngStream& rng);
  ad::Tensor operator()(const ad::Tensor& x) const {
    return ad::conv1d(x, w, b, stride, padding);
  }
};

struct BatchNorm1d {
  ad::Tensor gamma, beta;
  ad::Tensor running_mean, running_var;  // buffers
  float momentum = 0.1f;
  float eps = 1e-5f;

  BatchNorm1d() = default;
  BatchNorm1d(ParameterSet& params, const std::string& name, int channels);
  ad::Tensor operator()(const ad::Tensor& x, bool training) const {
    return ad::batchnorm1d(x, gamma, beta, running_mean.values(), running_var.values(),
                           training, momentum, eps);
  }
};

struct LayerNorm {
  ad::Tensor gamma, beta;
  float eps = 1e-5f;

  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, int dim);
  ad::Tensor operator()(const ad::Tensor& x) const {
    return ad::layernorm(x, gamma, beta, eps);
  }
};

// Self-attention with Q=K=V=x, input [N, T, D].
struct MultiHeadSelfAttention {
  Linear q, k, v, o;
  int heads = 1;
  int d_model = 0;

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParameterSet& params, const std::string& name, int d_model,
                         int heads, rng::RngStream& rng);
  ad::Tensor operator()(const ad::Tensor& x) const;
};

struct AdamOptions {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Standard Adam with bias correction; step() consumes and clears grads.
class Adam {
 public:
  Adam(ParameterSet& params, AdamOptions opts = {});

  void step();
  void zero_grad();
  std::int64_t t() const { return t_; }

 private:
  struct Slot {
    std::string name;
    ad::Tensor param;
    std::vector<float> m, v;
  };
  std::vector<Slot> slots_;
  AdamOptions opts_;
  std::int64_t t_ = 0;
};

}  // namespace simpsi::nn
