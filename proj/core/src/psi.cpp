#include "simpsi/psi.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace simpsi::psi {

namespace {

void check_map_values(const std::vector<float>& v) {
  for (float x : v) {
    if (!std::isfinite(x) || x < 0.0f || x > 1.0f) {
      throw std::invalid_argument("PreservationMap: values must lie in [0, 1]");
    }
  }
}

// Bin weight of the half spectrum in the inverse transform: paired bins
// appear twice in the full spectrum, DC and (even-length) Nyquist once.
inline float bin_weight(int k, int length) {
  if (k == 0) return 1.0f;
  if (length % 2 == 0 && k == length / 2) return 1.0f;
  return 2.0f;
}

}  // namespace

PsiMode psi_mode_from_string(const std::string& name) {
  if (name == "none") return PsiMode::none;
  if (name == "random") return PsiMode::random;
  if (name == "magnitude") return PsiMode::magnitude;
  if (name == "saliency") return PsiMode::saliency;
  if (name == "spectrum_preservative") return PsiMode::spectrum_preservative;
  throw std::invalid_argument("psi: unknown mode '" + name + "'");
}

std::string psi_mode_to_string(PsiMode mode) {
  switch (mode) {
    case PsiMode::none: return "none";
    case PsiMode::random: return "random";
    case PsiMode::magnitude: return "magnitude";
    case PsiMode::saliency: return "saliency";
    case PsiMode::spectrum_preservative: return "spectrum_preservative";
  }
  throw std::invalid_argument("psi: unmapped mode");
}

PreservationMap::PreservationMap(std::vector<float> v, std::string tag_)
    : values(std::move(v)), tag(std::move(tag_)) {
  check_map_values(values);
  complement.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i) complement[i] = 1.0f - values[i];
}

PreservationMap constant_map(int bins, float value) {
  if (bins < 1) throw std::invalid_argument("constant_map: bins must be >= 1");
  return PreservationMap(std::vector<float>(static_cast<size_t>(bins), value),
                         "constant(" + std::to_string(value) + ")");
}

PreservationMap random_map(rng::RngStream& rng, int bins) {
  if (bins < 1) throw std::invalid_argument("random_map: bins must be >= 1");
  std::vector<float> v(static_cast<size_t>(bins));
  for (auto& x : v) x = static_cast<float>(rng.next_double());
  return PreservationMap(std::move(v), "random");
}

PreservationMap invert(const PreservationMap& p) {
  PreservationMap out;
  out.values = p.complement;
  out.complement = p.values;
  constexpr const char* prefix = "inverted(";
  if (p.tag.rfind(prefix, 0) == 0 && !p.tag.empty() && p.tag.back() == ')') {
    out.tag = p.tag.substr(9, p.tag.size() - 10);
  } else {
    out.tag = std::string(prefix) + p.tag + ")";
  }
  return out;
}

std::vector<float> minmax_norm(const std::vector<float>& v) {
  if (v.empty()) return {};
  float lo = v[0], hi = v[0];
  for (float x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("minmax_norm: non-finite value");
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  std::vector<float> out(v.size());
  if (hi == lo) {
    std::fill(out.begin(), out.end(), 0.5f);
    return out;
  }
  const float span = hi - lo;
  for (size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / span;
  return out;
}

PreservationMap magnitude_map(const dsp::HalfSpectrum& xf) {
  std::vector<float> mags(static_cast<size_t>(xf.bins()), 0.0f);
  for (int c = 0; c < xf.channels; ++c) {
    for (int k = 0; k < xf.bins(); ++k) {
      mags[static_cast<size_t>(k)] = std::max(mags[static_cast<size_t>(k)],
                                              std::abs(xf.at(c, k)));
    }
  }
  return PreservationMap(minmax_norm(mags), "magnitude");
}

dsp::HalfSpectrum mix(const dsp::HalfSpectrum& xf, const dsp::HalfSpectrum& xaf,
                      const PreservationMap& p) {
  if (xf.channels != xaf.channels || xf.origin_length != xaf.origin_length) {
    throw std::invalid_argument("mix: spectrum shapes differ");
  }
  if (p.size() != xf.bins()) {
    throw std::invalid_argument("mix: map has " + std::to_string(p.size()) +
                                " bins, spectrum " + std::to_string(xf.bins()));
  }
  dsp::HalfSpectrum out(xf.channels, xf.origin_length);
  for (int c = 0; c < xf.channels; ++c) {
    for (int k = 0; k < xf.bins(); ++k) {
      const float w = p.values[static_cast<size_t>(k)];
      const float cw = p.complement[static_cast<size_t>(k)];
      if (w == 1.0f && cw == 0.0f) {
        out.at(c, k) = xf.at(c, k);
      } else if (w == 0.0f && cw == 1.0f) {
        out.at(c, k) = xaf.at(c, k);
      } else {
        out.at(c, k) = w * xf.at(c, k) + cw * xaf.at(c, k);
      }
    }
  }
  return out;
}

dsp::TimeSeries augment_and_preserve(const dsp::TimeSeries& xt, const dsp::HalfSpectrum& xf,
                                     const PreservationMap& p, const aug::AugmentSpec& spec,
                                     rng::RngStream& rng, const dsp::TimeSeries* donor) {
  if (xf.channels != xt.channels || xf.origin_length != xt.length) {
    throw std::invalid_argument("augment_and_preserve: spectrum does not match signal");
  }
  const dsp::TimeSeries augmented = aug::apply(spec, xt, rng, donor);
  return dsp::irfft(mix(xf, dsp::rfft(augmented), p));
}

PreservationMap saliency_map(const std::function<ad::Tensor(const ad::Tensor&)>& logit_fn,
                             const dsp::HalfSpectrum& xf) {
  const int c = xf.channels;
  const int f = xf.bins();
  std::vector<float> re_vals(static_cast<size_t>(c) * f);
  std::vector<float> im_vals(static_cast<size_t>(c) * f);
  for (int ch = 0; ch < c; ++ch) {
    for (int k = 0; k < f; ++k) {
      re_vals[static_cast<size_t>(ch) * f + k] = xf.at(ch, k).real();
      im_vals[static_cast<size_t>(ch) * f + k] = xf.at(ch, k).imag();
    }
  }
  ad::Tensor re({c, f}, std::move(re_vals), true);
  ad::Tensor im({c, f}, std::move(im_vals), true);
  ad::Tensor logit = logit_fn(irfft_op(re, im, xf.origin_length));
  if (logit.numel() != 1) {
    throw std::invalid_argument("saliency_map: logit_fn must return a scalar");
  }
  ad::backward(logit);

  std::vector<float> moduli(static_cast<size_t>(f), 0.0f);
  const auto& gre = re.grad();
  const auto& gim = im.grad();
  for (int ch = 0; ch < c; ++ch) {
    for (int k = 0; k < f; ++k) {
      const size_t i = static_cast<size_t>(ch) * f + k;
      const float mag = std::sqrt(gre[i] * gre[i] + gim[i] * gim[i]);
      moduli[static_cast<size_t>(k)] = std::max(moduli[static_cast<size_t>(k)], mag);
    }
  }
  return PreservationMap(minmax_norm(moduli), "saliency");
}

float preservation_contrastive_loss(float lp, float lrnd, float lneg, float beta1,
                                    float beta2) {
  if (!(beta1 < beta2)) {
    throw std::invalid_argument("preservation_contrastive_loss: beta1 must be < beta2");
  }
  return std::max(lp - lrnd + beta1, 0.0f) + std::max(lp - lneg + beta2, 0.0f);
}

ad::Tensor preservation_contrastive_loss(const ad::Tensor& lp, const ad::Tensor& lrnd,
                                         const ad::Tensor& lneg, float beta1, float beta2) {
  if (!(beta1 < beta2)) {
    throw std::invalid_argument("preservation_contrastive_loss: beta1 must be < beta2");
  }
  ad::Tensor a = ad::relu(ad::add_scalar(ad::sub(lp, lrnd), beta1));
  ad::Tensor b = ad::relu(ad::add_scalar(ad::sub(lp, lneg), beta2));
  return ad::add(a, b);
}

ad::Tensor irfft_op(const ad::Tensor& re, const ad::Tensor& im, int length) {
  if (re.shape() != im.shape() || re.shape().size() != 2) {
    throw std::invalid_argument("irfft_op: re/im must both be [channels, bins]");
  }
  const int c = re.shape()[0];
  const int f = re.shape()[1];
  if (f != dsp::half_bins(length)) {
    throw std::invalid_argument("irfft_op: " + std::to_string(f) + " bins cannot invert to length " +
                                std::to_string(length));
  }

  std::vector<float> out(static_cast<size_t>(c) * length);
  std::vector<std::complex<float>> row(static_cast<size_t>(f));
  for (int ch = 0; ch < c; ++ch) {
    for (int k = 0; k < f; ++k) {
      const size_t i = static_cast<size_t>(ch) * f + k;
      row[static_cast<size_t>(k)] = {re.values()[i], im.values()[i]};
    }
    const std::vector<float> time = dsp::irfft_row(row.data(), length);
    std::copy(time.begin(), time.end(), out.begin() + static_cast<size_t>(ch) * length);
  }

  ad::Tensor tre = re, tim = im;
  return ad::custom_op(
      "irfft", {re, im}, {c, length}, std::move(out),
      [tre, tim, c, f, length](const std::vector<float>& g) {
        const bool even = length % 2 == 0;
        for (int ch = 0; ch < c; ++ch) {
          const auto spec = dsp::rfft_row(g.data() + static_cast<size_t>(ch) * length, length);
          for (int k = 0; k < f; ++k) {
            const float wk = bin_weight(k, length) / static_cast<float>(length);
            const size_t i = static_cast<size_t>(ch) * f + k;
            const bool pinned = k == 0 || (even && k == length / 2);
            if (tre.requires_grad()) {
              tre.grad()[i] += wk * spec[static_cast<size_t>(k)].real();
            }
            if (tim.requires_grad() && !pinned) {
              tim.grad()[i] += wk * spec[static_cast<size_t>(k)].imag();
            }
          }
        }
      });
}

ad::Tensor mix_irfft_op(const ad::Tensor& pmap, const std::vector<dsp::HalfSpectrum>& orig,
                        const std::vector<dsp::HalfSpectrum>& augmented) {
  if (pmap.shape().size() != 2) {
    throw std::invalid_argument("mix_irfft_op: map must be [batch, bins]");
  }
  const int n = pmap.shape()[0];
  const int f = pmap.shape()[1];
  if (static_cast<int>(orig.size()) != n || static_cast<int>(augmented.size()) != n) {
    throw std::invalid_argument("mix_irfft_op: need one spectrum pair per batch row");
  }
  if (n == 0) throw std::invalid_argument("mix_irfft_op: empty batch");
  const int c = orig[0].channels;
  const int length = orig[0].origin_length;
  if (dsp::half_bins(length) != f) {
    throw std::invalid_argument("mix_irfft_op: map bins do not match spectra");
  }
  for (int i = 0; i < n; ++i) {
    if (orig[static_cast<size_t>(i)].channels != c ||
        orig[static_cast<size_t>(i)].origin_length != length ||
        augmented[static_cast<size_t>(i)].channels != c ||
        augmented[static_cast<size_t>(i)].origin_length != length) {
      throw std::invalid_argument("mix_irfft_op: inconsistent spectrum shapes");
    }
  }

  std::vector<float> out(static_cast<size_t>(n) * c * length);
  std::vector<std::complex<float>> row(static_cast<size_t>(f));
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      for (int k = 0; k < f; ++k) {
        const float w = pmap.values()[static_cast<size_t>(i) * f + k];
        row[static_cast<size_t>(k)] = w * orig[static_cast<size_t>(i)].at(ch, k) +
                                      (1.0f - w) * augmented[static_cast<size_t>(i)].at(ch, k);
      }
      const std::vector<float> time = dsp::irfft_row(row.data(), length);
      std::copy(time.begin(), time.end(),
                out.begin() + (static_cast<size_t>(i) * c + ch) * length);
    }
  }

  ad::Tensor tp = pmap;
  auto orig_copy = std::make_shared<std::vector<dsp::HalfSpectrum>>(orig);
  auto aug_copy = std::make_shared<std::vector<dsp::HalfSpectrum>>(augmented);
  return ad::custom_op(
      "mix_irfft", {pmap}, {n, c, length}, std::move(out),
      [tp, orig_copy, aug_copy, n, c, f, length](const std::vector<float>& g) {
        if (!tp.requires_grad()) return;
        const bool even = length % 2 == 0;
        auto& gp = tp.grad();
        for (int i = 0; i < n; ++i) {
          for (int ch = 0; ch < c; ++ch) {
            const auto spec =
                dsp::rfft_row(g.data() + (static_cast<size_t>(i) * c + ch) * length, length);
            for (int k = 0; k < f; ++k) {
              const std::complex<float> delta = (*orig_copy)[static_cast<size_t>(i)].at(ch, k) -
                                                (*aug_copy)[static_cast<size_t>(i)].at(ch, k);
              const float wk = bin_weight(k, length) / static_cast<float>(length);
              const bool pinned = k == 0 || (even && k == length / 2);
              float dot = spec[static_cast<size_t>(k)].real() * delta.real();
              if (!pinned) dot += spec[static_cast<size_t>(k)].imag() * delta.imag();
              gp[static_cast<size_t>(i) * f + k] += wk * dot;
            }
          }
        }
      });
}

}  // namespace simpsi::psi
