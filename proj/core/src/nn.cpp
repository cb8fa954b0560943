#include "simpsi/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace simpsi::nn {

ad::Tensor ParameterSet::insert(const std::string& name, ad::Tensor t, bool trainable) {
  if (find(name)) throw std::invalid_argument("ParameterSet: duplicate name " + name);
  if (!t.defined()) throw std::invalid_argument("ParameterSet: undefined tensor " + name);
  t.set_requires_grad(trainable);
  entries_.push_back({name, std::move(t), trainable});
  return entries_.back().tensor;
}

ad::Tensor ParameterSet::add(const std::string& name, ad::Tensor t) {
  return insert(name, std::move(t), true);
}

ad::Tensor ParameterSet::add_buffer(const std::string& name, ad::Tensor t) {
  return insert(name, std::move(t), false);
}

ad::Tensor* ParameterSet::find(const std::string& name) {
  for (auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

const ad::Tensor* ParameterSet::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

std::int64_t ParameterSet::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.tensor.numel();
  }
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParameterSet::set_requires_grad(bool flag) {
  for (auto& e : entries_) {
    if (e.trainable) e.tensor.set_requires_grad(flag);
  }
}

FreezeGuard::FreezeGuard(ParameterSet& params) : params_(params) {
  saved_.reserve(params.entries().size());
  for (const auto& e : params.entries()) saved_.push_back(e.tensor.requires_grad());
  params_.set_requires_grad(false);
}

FreezeGuard::~FreezeGuard() {
  size_t i = 0;
  for (const auto& e : params_.entries()) {
    ad::Tensor t = e.tensor;  // shared handle; flag lives on the impl
    t.set_requires_grad(saved_[i++]);
  }
}

ad::Tensor kaiming_uniform(ad::Shape shape, int fan_in, rng::RngStream& rng) {
  if (fan_in < 1) throw std::invalid_argument("kaiming_uniform: fan_in must be >= 1");
  const double bound = std::sqrt(6.0 / fan_in);
  std::vector<float> vals(static_cast<size_t>(ad::numel(shape)));
  for (auto& v : vals) v = static_cast<float>(rng.uniform(-bound, bound));
  return ad::Tensor(std::move(shape), std::move(vals));
}

Linear::Linear(ParameterSet& params, const std::string& name, int in, int out,
               rng::RngStream& rng) {
  w = params.add(name + ".w", kaiming_uniform({out, in}, in, rng));
  b = params.add(name + ".b", ad::Tensor({out}, 0.0f));
}

Conv1d::Conv1d(ParameterSet& params, const std::string& name, int in_ch, int out_ch,
               int kernel, int stride, int padding, rng::RngStream& rng)
    : stride(stride), padding(padding) {
  w = params.add(name + ".w", kaiming_uniform({out_ch, in_ch, kernel}, in_ch * kernel, rng));
  b = params.add(name + ".b", ad::Tensor({out_ch}, 0.0f));
}

BatchNorm1d::BatchNorm1d(ParameterSet& params, const std::string& name, int channels) {
  gamma = params.add(name + ".gamma", ad::Tensor({channels}, 1.0f));
  beta = params.add(name + ".beta", ad::Tensor({channels}, 0.0f));
  running_mean = params.add_buffer(name + ".running_mean", ad::Tensor({channels}, 0.0f));
  running_var = params.add_buffer(name + ".running_var", ad::Tensor({channels}, 1.0f));
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, int dim) {
  gamma = params.add(name + ".gamma", ad::Tensor({dim}, 1.0f));
  beta = params.add(name + ".beta", ad::Tensor({dim}, 0.0f));
}

MultiHeadSelfAttention::MultiHeadSelfAttention(ParameterSet& params, const std::string& name,
                                               int d_model, int heads, rng::RngStream& rng)
    : heads(heads), d_model(d_model) {
  if (d_model % heads != 0) {
    throw std::invalid_argument("MultiHeadSelfAttention: d_model " + std::to_string(d_model) +
                                " not divisible by heads " + std::to_string(heads));
  }
  q = Linear(params, name + ".q", d_model, d_model, rng);
  k = Linear(params, name + ".k", d_model, d_model, rng);
  v = Linear(params, name + ".v", d_model, d_model, rng);
  o = Linear(params, name + ".o", d_model, d_model, rng);
}

ad::Tensor MultiHeadSelfAttention::operator()(const ad::Tensor& x) const {
  if (x.ndim() != 3 || x.shape()[2] != d_model) {
    throw std::invalid_argument("MultiHeadSelfAttention: expected [N,T," +
                                std::to_string(d_model) + "], got " + ad::shape_str(x.shape()));
  }
  const int N = x.shape()[0], T = x.shape()[1];
  const int dh = d_model / heads;

  auto split = [&](const ad::Tensor& t) {
    return ad::transpose(ad::reshape(t, {N, T, heads, dh}), {0, 2, 1, 3});  // [N,H,T,dh]
  };
  ad::Tensor qh = split(q(x));
  ad::Tensor kh = split(k(x));
  ad::Tensor vh = split(v(x));

  ad::Tensor scores = ad::matmul(qh, ad::transpose(kh, {0, 1, 3, 2}));  // [N,H,T,T]
  scores = ad::mul_scalar(scores, 1.0f / std::sqrt(static_cast<float>(dh)));
  ad::Tensor attn = ad::softmax(scores);
  ad::Tensor ctx = ad::matmul(attn, vh);                                 // [N,H,T,dh]
  ctx = ad::reshape(ad::transpose(ctx, {0, 2, 1, 3}), {N, T, d_model});
  return o(ctx);
}

Adam::Adam(ParameterSet& params, AdamOptions opts) : opts_(opts) {
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    Slot s;
    s.name = e.name;
    s.param = e.tensor;
    s.m.assign(static_cast<size_t>(e.tensor.numel()), 0.0f);
    s.v.assign(static_cast<size_t>(e.tensor.numel()), 0.0f);
    slots_.push_back(std::move(s));
  }
}

void Adam::step() {
  for (const auto& s : slots_) {
    if (!s.param.has_grad()) {
      throw std::runtime_error("adam_step: missing gradient for " + s.name);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(opts_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(opts_.beta2), static_cast<double>(t_));
  for (auto& s : slots_) {
    auto& w = s.param.values();
    const auto& g = s.param.grad();
    for (size_t i = 0; i < w.size(); ++i) {
      s.m[i] = opts_.beta1 * s.m[i] + (1.0f - opts_.beta1) * g[i];
      s.v[i] = opts_.beta2 * s.v[i] + (1.0f - opts_.beta2) * g[i] * g[i];
      const float mhat = static_cast<float>(s.m[i] / bc1);
      const float vhat = static_cast<float>(s.v[i] / bc2);
      w[i] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
    s.param.zero_grad();
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

}  // namespace simpsi::nn
