#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "simpsi/tensor.hpp"

namespace simpsi::ad {

namespace {

std::vector<size_t> lead_strides(const Shape& lead, const Shape& out_lead) {
  // strides of `lead` viewed in out_lead coordinates, 0 on broadcast dims
  const size_t pad = out_lead.size() - lead.size();
  std::vector<size_t> contig(lead.size());
  size_t acc = 1;
  for (int i = static_cast<int>(lead.size()) - 1; i >= 0; --i) {
    contig[static_cast<size_t>(i)] = acc;
    acc *= static_cast<size_t>(lead[static_cast<size_t>(i)]);
  }
  std::vector<size_t> st(out_lead.size(), 0);
  for (size_t i = 0; i < lead.size(); ++i) {
    st[pad + i] = (lead[i] == 1 && out_lead[pad + i] > 1) ? 0 : contig[i];
  }
  return st;
}

// f(out_batch, a_batch, b_batch) for each flat index of out_lead.
template <class F>
void for_each_batch(const Shape& out_lead, const std::vector<size_t>& astr,
                    const std::vector<size_t>& bstr, F&& f) {
  size_t total = 1;
  for (int d : out_lead) total *= static_cast<size_t>(d);
  const int nd = static_cast<int>(out_lead.size());
  if (nd == 0) {
    f(size_t{0}, size_t{0}, size_t{0});
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
      if (coord[du] < out_lead[du]) break;
      coord[du] = 0;
      aoff -= astr[du] * static_cast<size_t>(out_lead[du]);
      boff -= bstr[du] * static_cast<size_t>(out_lead[du]);
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined() || a.ndim() < 2 || b.ndim() < 2) {
    throw std::invalid_argument("matmul: operands must have rank >= 2");
  }
  const int M = a.shape()[static_cast<size_t>(a.ndim() - 2)];
  const int K = a.shape()[static_cast<size_t>(a.ndim() - 1)];
  const int K2 = b.shape()[static_cast<size_t>(b.ndim() - 2)];
  const int N = b.shape()[static_cast<size_t>(b.ndim() - 1)];
  if (K != K2) {
    throw std::invalid_argument("matmul: inner dims disagree, " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  }
  const Shape a_lead(a.shape().begin(), a.shape().end() - 2);
  const Shape b_lead(b.shape().begin(), b.shape().end() - 2);
  Shape out_lead;
  {
    const size_t nd = std::max(a_lead.size(), b_lead.size());
    out_lead.resize(nd);
    for (size_t i = 0; i < nd; ++i) {
      const int ad = i < nd - a_lead.size() ? 1 : a_lead[i - (nd - a_lead.size())];
      const int bd = i < nd - b_lead.size() ? 1 : b_lead[i - (nd - b_lead.size())];
      if (ad != bd && ad != 1 && bd != 1) {
        throw std::invalid_argument("matmul: batch dims of " + shape_str(a.shape()) +
                                    " and " + shape_str(b.shape()) + " do not broadcast");
      }
      out_lead[i] = std::max(ad, bd);
    }
  }
  Shape out_shape = out_lead;
  out_shape.push_back(M);
  out_shape.push_back(N);

  const auto astr = lead_strides(a_lead, out_lead);
  const auto bstr = lead_strides(b_lead, out_lead);
  const size_t amat = static_cast<size_t>(M) * K;
  const size_t bmat = static_cast<size_t>(K) * N;
  const size_t omat = static_cast<size_t>(M) * N;

  std::vector<float> out(static_cast<size_t>(numel(out_shape)), 0.0f);
  const float* av = a.values().data();
  const float* bv = b.values().data();
  for_each_batch(out_lead, astr, bstr, [&](size_t ob, size_t ab, size_t bb) {
    const float* A = av + ab * amat;
    const float* B = bv + bb * bmat;
    float* O = out.data() + ob * omat;
    for (int m = 0; m < M; ++m) {
      const float* arow = A + static_cast<size_t>(m) * K;
      float* orow = O + static_cast<size_t>(m) * N;
      for (int k = 0; k < K; ++k) {
        const float f = arow[k];
        const float* brow = B + static_cast<size_t>(k) * N;
        for (int n = 0; n < N; ++n) orow[n] += f * brow[n];
      }
    }
  });

  Tensor ta = a, tb = b;
  auto bw = [ta, tb, out_lead, astr, bstr, M, K, N, amat, bmat, omat](const std::vector<float>& g) {
    const bool need_a = ta.requires_grad();
    const bool need_b = tb.requires_grad();
    float* ga = need_a ? ta.grad().data() : nullptr;
    float* gb = need_b ? tb.grad().data() : nullptr;
    const float* av2 = ta.values().data();
    const float* bv2 = tb.values().data();
    for_each_batch(out_lead, astr, bstr, [&](size_t ob, size_t ab, size_t bb) {
      const float* G = g.data() + ob * omat;
      const float* A = av2 + ab * amat;
      const float* B = bv2 + bb * bmat;
      if (need_a) {
        float* dA = ga + ab * amat;
        for (int m = 0; m < M; ++m) {
          const float* grow = G + static_cast<size_t>(m) * N;
          float* darow = dA + static_cast<size_t>(m) * K;
          for (int k = 0; k < K; ++k) {
            const float* brow = B + static_cast<size_t>(k) * N;
            float acc = 0.0f;
            for (int n = 0; n < N; ++n) acc += grow[n] * brow[n];
            darow[k] += acc;
          }
        }
      }
      if (need_b) {
        float* dB = gb + bb * bmat;
        for (int m = 0; m < M; ++m) {
          const float* arow = A + static_cast<size_t>(m) * K;
          const float* grow = G + static_cast<size_t>(m) * N;
          for (int k = 0; k < K; ++k) {
            const float f = arow[k];
            float* dbrow = dB + static_cast<size_t>(k) * N;
            for (int n = 0; n < N; ++n) dbrow[n] += f * grow[n];
          }
        }
      }
    });
  };
  return custom_op("matmul", {a, b}, std::move(out_shape), std::move(out), std::move(bw));
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  if (!x.defined() || x.ndim() != 3 || !w.defined() || w.ndim() != 3) {
    throw std::invalid_argument("conv1d: expected x [N,Cin,L] and w [Cout,Cin,K]");
  }
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv1d: bad stride/padding");
  const int N = x.shape()[0], Cin = x.shape()[1], L = x.shape()[2];
  const int Cout = w.shape()[0], K = w.shape()[2];
  if (w.shape()[1] != Cin) {
    throw std::invalid_argument("conv1d: channel mismatch, x " + shape_str(x.shape()) +
                                " vs w " + shape_str(w.shape()));
  }
  if (b.defined() && (b.ndim() != 1 || b.shape()[0] != Cout)) {
    throw std::invalid_argument("conv1d: bias shape " + shape_str(b.shape()));
  }
  const int Lp = L + 2 * padding;
  const int Lout = (Lp - K) / stride + 1;
  if (Lp < K || Lout < 1) throw std::invalid_argument("conv1d: kernel larger than padded input");

  // padded copy; shared by forward and backward closures
  const size_t pad_sz = static_cast<size_t>(N) * Cin * Lp;
  auto xpad = std::make_shared<std::vector<float>>(pad_sz, 0.0f);
  {
    const float* xv = x.values().data();
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < Cin; ++c) {
        const float* src = xv + (static_cast<size_t>(n) * Cin + c) * L;
        float* dst = xpad->data() + (static_cast<size_t>(n) * Cin + c) * Lp + padding;
        std::copy(src, src + L, dst);
      }
    }
  }

  std::vector<float> out(static_cast<size_t>(N) * Cout * Lout, 0.0f);
  {
    const float* wv = w.values().data();
    const float* bvp = b.defined() ? b.values().data() : nullptr;
    for (int n = 0; n < N; ++n) {
      for (int co = 0; co < Cout; ++co) {
        float* orow = out.data() + (static_cast<size_t>(n) * Cout + co) * Lout;
        if (bvp) {
          const float bias = bvp[co];
          for (int t = 0; t < Lout; ++t) orow[t] = bias;
        }
        for (int ci = 0; ci < Cin; ++ci) {
          const float* xrow = xpad->data() + (static_cast<size_t>(n) * Cin + ci) * Lp;
          const float* wrow = wv + (static_cast<size_t>(co) * Cin + ci) * K;
          for (int k = 0; k < K; ++k) {
            const float f = wrow[k];
            const float* xk = xrow + k;
            if (stride == 1) {
              for (int t = 0; t < Lout; ++t) orow[t] += f * xk[t];
            } else {
              for (int t = 0; t < Lout; ++t) orow[t] += f * xk[static_cast<size_t>(t) * stride];
            }
          }
        }
      }
    }
  }

  Tensor tx = x, tw = w, tb = b;
  auto bw = [tx, tw, tb, xpad, N, Cin, Cout, L, Lp, Lout, K, stride, padding](const std::vector<float>& g) {
    const float* wv = tw.values().data();
    if (tb.defined() && tb.requires_grad()) {
      auto& gb = tb.grad();
      for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Cout; ++co) {
          const float* grow = g.data() + (static_cast<size_t>(n) * Cout + co) * Lout;
          float acc = 0.0f;
          for (int t = 0; t < Lout; ++t) acc += grow[t];
          gb[static_cast<size_t>(co)] += acc;
        }
      }
    }
    if (tw.requires_grad()) {
      auto& gw = tw.grad();
      for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Cout; ++co) {
          const float* grow = g.data() + (static_cast<size_t>(n) * Cout + co) * Lout;
          for (int ci = 0; ci < Cin; ++ci) {
            const float* xrow = xpad->data() + (static_cast<size_t>(n) * Cin + ci) * Lp;
            float* gwrow = gw.data() + (static_cast<size_t>(co) * Cin + ci) * K;
            for (int k = 0; k < K; ++k) {
              const float* xk = xrow + k;
              float acc = 0.0f;
              if (stride == 1) {
                for (int t = 0; t < Lout; ++t) acc += grow[t] * xk[t];
              } else {
                for (int t = 0; t < Lout; ++t) acc += grow[t] * xk[static_cast<size_t>(t) * stride];
              }
              gwrow[k] += acc;
            }
          }
        }
      }
    }
    if (tx.requires_grad()) {
      std::vector<float> gpad(static_cast<size_t>(N) * Cin * Lp, 0.0f);
      for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Cout; ++co) {
          const float* grow = g.data() + (static_cast<size_t>(n) * Cout + co) * Lout;
          for (int ci = 0; ci < Cin; ++ci) {
            float* gxrow = gpad.data() + (static_cast<size_t>(n) * Cin + ci) * Lp;
            const float* wrow = wv + (static_cast<size_t>(co) * Cin + ci) * K;
            for (int k = 0; k < K; ++k) {
              const float f = wrow[k];
              float* gxk = gxrow + k;
              if (stride == 1) {
                for (int t = 0; t < Lout; ++t) gxk[t] += f * grow[t];
              } else {
                for (int t = 0; t < Lout; ++t) gxk[static_cast<size_t>(t) * stride] += f * grow[t];
              }
            }
          }
        }
      }
      auto& gx = tx.grad();
      for (int n = 0; n < N; ++n) {
        for (int ci = 0; ci < Cin; ++ci) {
          const float* src = gpad.data() + (static_cast<size_t>(n) * Cin + ci) * Lp + padding;
          float* dst = gx.data() + (static_cast<size_t>(n) * Cin + ci) * L;
          for (int t = 0; t < L; ++t) dst[t] += src[t];
        }
      }
    }
  };

  std::vector<Tensor> inputs = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  return custom_op("conv1d", std::move(inputs), Shape{N, Cout, Lout}, std::move(out), std::move(bw));
}

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   std::vector<float>& running_mean, std::vector<float>& running_var,
                   bool training, float momentum, float eps) {
  if (!x.defined() || x.ndim() != 3) {
    throw std::invalid_argument("batchnorm1d: expected x [N,C,L]");
  }
  const int N = x.shape()[0], C = x.shape()[1], L = x.shape()[2];
  if (!gamma.defined() || gamma.numel() != C || !beta.defined() || beta.numel() != C ||
      running_mean.size() != static_cast<size_t>(C) || running_var.size() != static_cast<size_t>(C)) {
    throw std::invalid_argument("batchnorm1d: parameter size mismatch for C=" + std::to_string(C));
  }
  const size_t slice = static_cast<size_t>(N) * L;

  std::vector<float> mean_c(static_cast<size_t>(C)), invstd(static_cast<size_t>(C));
  if (training) {
    const float* xv = x.values().data();
    for (int c = 0; c < C; ++c) {
      double sum = 0.0, sumsq = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* row = xv + (static_cast<size_t>(n) * C + c) * L;
        for (int t = 0; t < L; ++t) {
          sum += row[t];
          sumsq += static_cast<double>(row[t]) * row[t];
        }
      }
      const double mu = sum / static_cast<double>(slice);
      const double var = std::max(0.0, sumsq / static_cast<double>(slice) - mu * mu);
      mean_c[static_cast<size_t>(c)] = static_cast<float>(mu);
      invstd[static_cast<size_t>(c)] = static_cast<float>(1.0 / std::sqrt(var + eps));
      running_mean[static_cast<size_t>(c)] =
          (1.0f - momentum) * running_mean[static_cast<size_t>(c)] + momentum * static_cast<float>(mu);
      running_var[static_cast<size_t>(c)] =
          (1.0f - momentum) * running_var[static_cast<size_t>(c)] + momentum * static_cast<float>(var);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean_c[static_cast<size_t>(c)] = running_mean[static_cast<size_t>(c)];
      invstd[static_cast<size_t>(c)] =
          1.0f / std::sqrt(running_var[static_cast<size_t>(c)] + eps);
    }
  }

  const size_t total = x.values().size();
  std::vector<float> xhat(total), out(total);
  {
    const float* xv = x.values().data();
    const float* gv = gamma.values().data();
    const float* bv = beta.values().data();
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        const size_t base = (static_cast<size_t>(n) * C + c) * L;
        const float mu = mean_c[static_cast<size_t>(c)];
        const float is = invstd[static_cast<size_t>(c)];
        const float ga = gv[c], be = bv[c];
        for (int t = 0; t < L; ++t) {
          const float h = (xv[base + static_cast<size_t>(t)] - mu) * is;
          xhat[base + static_cast<size_t>(t)] = h;
          out[base + static_cast<size_t>(t)] = ga * h + be;
        }
      }
    }
  }

  Tensor tx = x, tg = gamma, tb = beta;
  auto bw = [tx, tg, tb, xhat = std::move(xhat), invstd = std::move(invstd), training, N, C,
             L, slice](const std::vector<float>& g) {
    std::vector<float> s1(static_cast<size_t>(C), 0.0f), s2(static_cast<size_t>(C), 0.0f);
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        const size_t base = (static_cast<size_t>(n) * C + c) * L;
        float a1 = 0.0f, a2 = 0.0f;
        for (int t = 0; t < L; ++t) {
          a1 += g[base + static_cast<size_t>(t)];
          a2 += g[base + static_cast<size_t>(t)] * xhat[base + static_cast<size_t>(t)];
        }
        s1[static_cast<size_t>(c)] += a1;
        s2[static_cast<size_t>(c)] += a2;
      }
    }
    if (tb.requires_grad()) {
      auto& gb = tb.grad();
      for (int c = 0; c < C; ++c) gb[static_cast<size_t>(c)] += s1[static_cast<size_t>(c)];
    }
    if (tg.requires_grad()) {
      auto& gg = tg.grad();
      for (int c = 0; c < C; ++c) gg[static_cast<size_t>(c)] += s2[static_cast<size_t>(c)];
    }
    if (tx.requires_grad()) {
      auto& gx = tx.grad();
      const float* gv = tg.values().data();
      const float inv_m = 1.0f / static_cast<float>(slice);
      for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
          const size_t base = (static_cast<size_t>(n) * C + c) * L;
          const float scale = gv[c] * invstd[static_cast<size_t>(c)];
          if (training) {
            const float m1 = s1[static_cast<size_t>(c)] * inv_m;
            const float m2 = s2[static_cast<size_t>(c)] * inv_m;
            for (int t = 0; t < L; ++t) {
              const size_t i = base + static_cast<size_t>(t);
              gx[i] += scale * (g[i] - m1 - xhat[i] * m2);
            }
          } else {
            for (int t = 0; t < L; ++t) {
              const size_t i = base + static_cast<size_t>(t);
              gx[i] += scale * g[i];
            }
          }
        }
      }
    }
  };
  return custom_op("batchnorm1d", {x, gamma, beta}, x.shape(), std::move(out), std::move(bw));
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  if (!x.defined() || x.ndim() < 1) throw std::invalid_argument("layernorm: undefined input");
  const int D = x.shape()[static_cast<size_t>(x.ndim() - 1)];
  if (!gamma.defined() || gamma.numel() != D || !beta.defined() || beta.numel() != D) {
    throw std::invalid_argument("layernorm: parameter size mismatch for D=" + std::to_string(D));
  }
  const size_t rows = x.values().size() / static_cast<size_t>(D);

  const size_t total = x.values().size();
  std::vector<float> xhat(total), out(total), invstd(rows);
  {
    const float* xv = x.values().data();
    const float* gv = gamma.values().data();
    const float* bv = beta.values().data();
    for (size_t r = 0; r < rows; ++r) {
      const size_t base = r * static_cast<size_t>(D);
      double sum = 0.0, sumsq = 0.0;
      for (int j = 0; j < D; ++j) {
        sum += xv[base + static_cast<size_t>(j)];
        sumsq += static_cast<double>(xv[base + static_cast<size_t>(j)]) * xv[base + static_cast<size_t>(j)];
      }
      const double mu = sum / D;
      const double var = std::max(0.0, sumsq / D - mu * mu);
      const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
      invstd[r] = is;
      for (int j = 0; j < D; ++j) {
        const size_t i = base + static_cast<size_t>(j);
        const float h = (xv[i] - static_cast<float>(mu)) * is;
        xhat[i] = h;
        out[i] = gv[j] * h + bv[j];
      }
    }
  }

  Tensor tx = x, tg = gamma, tb = beta;
  auto bw = [tx, tg, tb, xhat = std::move(xhat), invstd = std::move(invstd), D,
             rows](const std::vector<float>& g) {
    const float* gv = tg.values().data();
    const bool need_x = tx.requires_grad();
    const bool need_g = tg.requires_grad();
    const bool need_b = tb.requires_grad();
    float* gx = need_x ? tx.grad().data() : nullptr;
    float* gg = need_g ? tg.grad().data() : nullptr;
    float* gb = need_b ? tb.grad().data() : nullptr;
    for (size_t r = 0; r < rows; ++r) {
      const size_t base = r * static_cast<size_t>(D);
      if (need_g || need_b) {
        for (int j = 0; j < D; ++j) {
          const size_t i = base + static_cast<size_t>(j);
          if (gg) gg[j] += g[i] * xhat[i];
          if (gb) gb[j] += g[i];
        }
      }
      if (need_x) {
        float m1 = 0.0f, m2 = 0.0f;
        for (int j = 0; j < D; ++j) {
          const size_t i = base + static_cast<size_t>(j);
          const float h = gv[j] * g[i];
          m1 += h;
          m2 += h * xhat[i];
        }
        m1 /= static_cast<float>(D);
        m2 /= static_cast<float>(D);
        const float is = invstd[r];
        for (int j = 0; j < D; ++j) {
          const size_t i = base + static_cast<size_t>(j);
          gx[i] += is * (gv[j] * g[i] - m1 - xhat[i] * m2);
        }
      }
    }
  };
  return custom_op("layernorm", {x, gamma, beta}, x.shape(), std::move(out), std::move(bw));
}

Tensor softmax(const Tensor& x) {
  if (!x.defined() || x.ndim() < 1) throw std::invalid_argument("softmax: undefined input");
  const int D = x.shape()[static_cast<size_t>(x.ndim() - 1)];
  const size_t rows = x.values().size() / static_cast<size_t>(D);
  std::vector<float> out(x.values().size());
  const float* xv = x.values().data();
  for (size_t r = 0; r < rows; ++r) {
    const size_t base = r * static_cast<size_t>(D);
    float m = xv[base];
    for (int j = 1; j < D; ++j) m = std::max(m, xv[base + static_cast<size_t>(j)]);
    float sum = 0.0f;
    for (int j = 0; j < D; ++j) {
      const float e = std::exp(xv[base + static_cast<size_t>(j)] - m);
      out[base + static_cast<size_t>(j)] = e;
      sum += e;
    }
    const float inv = 1.0f / sum;
    for (int j = 0; j < D; ++j) out[base + static_cast<size_t>(j)] *= inv;
  }

  Tensor tx = x;
  std::vector<float> y = out;
  auto bw = [tx, y = std::move(y), D, rows](const std::vector<float>& g) {
    if (!tx.requires_grad()) return;
    auto& gx = tx.grad();
    for (size_t r = 0; r < rows; ++r) {
      const size_t base = r * static_cast<size_t>(D);
      float dot = 0.0f;
      for (int j = 0; j < D; ++j) {
        const size_t i = base + static_cast<size_t>(j);
        dot += g[i] * y[i];
      }
      for (int j = 0; j < D; ++j) {
        const size_t i = base + static_cast<size_t>(j);
        gx[i] += y[i] * (g[i] - dot);
      }
    }
  };
  return custom_op("softmax", {x}, x.shape(), std::move(out), std::move(bw));
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (!logits.defined() || logits.ndim() != 2) {
    throw std::invalid_argument("softmax_cross_entropy: expected logits [N,M]");
  }
  const int N = logits.shape()[0], M = logits.shape()[1];
  if (static_cast<int>(labels.size()) != N) {
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(N) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= M) {
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                  " outside [0," + std::to_string(M) + ")");
    }
  }

  std::vector<float> probs(logits.values().size());
  const float* lv = logits.values().data();
  double loss = 0.0;
  for (int r = 0; r < N; ++r) {
    const size_t base = static_cast<size_t>(r) * M;
    float m = lv[base];
    for (int j = 1; j < M; ++j) m = std::max(m, lv[base + static_cast<size_t>(j)]);
    double sum = 0.0;
    for (int j = 0; j < M; ++j) sum += std::exp(static_cast<double>(lv[base + static_cast<size_t>(j)]) - m);
    const double lse = m + std::log(sum);
    for (int j = 0; j < M; ++j) {
      probs[base + static_cast<size_t>(j)] =
          static_cast<float>(std::exp(static_cast<double>(lv[base + static_cast<size_t>(j)]) - lse));
    }
    loss += lse - lv[base + static_cast<size_t>(labels[static_cast<size_t>(r)])];
  }
  loss /= N;

  Tensor tl = logits;
  auto bw = [tl, probs = std::move(probs), labels, N, M](const std::vector<float>& g) {
    if (!tl.requires_grad()) return;
    auto& gl = tl.grad();
    const float scale = g[0] / static_cast<float>(N);
    for (int r = 0; r < N; ++r) {
      const size_t base = static_cast<size_t>(r) * M;
      for (int j = 0; j < M; ++j) {
        const float delta = j == labels[static_cast<size_t>(r)] ? 1.0f : 0.0f;
        gl[base + static_cast<size_t>(j)] += scale * (probs[base + static_cast<size_t>(j)] - delta);
      }
    }
  };
  return custom_op("softmax_cross_entropy", {logits}, Shape{},
                   {static_cast<float>(loss)}, std::move(bw));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (!x.defined() || x.ndim() < 1 || !w.defined() || w.ndim() != 2) {
    throw std::invalid_argument("linear: expected x [...,in] and w [out,in]");
  }
  const int in = x.shape()[static_cast<size_t>(x.ndim() - 1)];
  if (w.shape()[1] != in) {
    throw std::invalid_argument("linear: in-features mismatch, x " + shape_str(x.shape()) +
                                " vs w " + shape_str(w.shape()));
  }
  const int out_features = w.shape()[0];
  const int rows = x.numel() / in;
  Tensor flat = x.ndim() == 2 ? x : reshape(x, {rows, in});
  Tensor y = matmul(flat, transpose(w, {1, 0}));
  if (b.defined()) {
    if (b.numel() != out_features) {
      throw std::invalid_argument("linear: bias shape " + shape_str(b.shape()));
    }
    y = add(y, b);
  }
  if (x.ndim() == 2) return y;
  Shape out_shape(x.shape());
  out_shape.back() = out_features;
  return reshape(y, std::move(out_shape));
}

}  // namespace simpsi::ad
