#pragma once

#include <functional>
#include <string>
#include <vector>

#include "simpsi/augment.hpp"
#include "simpsi/dsp.hpp"
#include "simpsi/rng.hpp"
#include "simpsi/tensor.hpp"

namespace simpsi::psi {

enum class PsiMode { none, random, magnitude, saliency, spectrum_preservative };

PsiMode psi_mode_from_string(const std::string& name);
std::string psi_mode_to_string(PsiMode mode);

// Per-frequency importance scores in [0,1], one map broadcast across
// channels. The complement (1 - values) is stored explicitly so that
// invert() is a pure swap and mix() commutes with it bitwise.
struct PreservationMap {
  std::vector<float> values;
  std::vector<float> complement;
  std::string tag;

  PreservationMap() = default;
  PreservationMap(std::vector<float> v, std::string tag);  // validates [0,1]

  int size() const { return static_cast<int>(values.size()); }
};

PreservationMap constant_map(int bins, float value);
PreservationMap random_map(rng::RngStream& rng, int bins);  // i.i.d. U(0,1)
PreservationMap invert(const PreservationMap& p);

// (v - min) / (max - min); a constant vector maps to all 0.5.
std::vector<float> minmax_norm(const std::vector<float>& v);

// minmax-normalized channel-wise maximum magnitude of the spectrum.
PreservationMap magnitude_map(const dsp::HalfSpectrum& xf);

// out[c,k] = P[k] * xf[c,k] + (1-P[k]) * xaf[c,k]; exact copy at P in {0,1}.
dsp::HalfSpectrum mix(const dsp::HalfSpectrum& xf, const dsp::HalfSpectrum& xaf,
                      const PreservationMap& p);

// irfft( mix(xf, rfft(apply(spec, xt, rng)), p) ); fresh augmentation draw
// per call. `xf` must be rfft(xt); `donor` forwards to freq_mix.
dsp::TimeSeries augment_and_preserve(const dsp::TimeSeries& xt, const dsp::HalfSpectrum& xf,
                                     const PreservationMap& p, const aug::AugmentSpec& spec,
                                     rng::RngStream& rng,
                                     const dsp::TimeSeries* donor = nullptr);

// Saliency: modulus of the target logit's gradient with respect to each
// complex bin, maxed over channels and minmax-normalized. `logit_fn` maps a
// time-domain tensor [C, L] to the scalar logit; its parameters should be
// frozen by the caller if their gradients matter.
PreservationMap saliency_map(const std::function<ad::Tensor(const ad::Tensor&)>& logit_fn,
                             const dsp::HalfSpectrum& xf);

// max(lp - lrnd + beta1, 0) + max(lp - lneg + beta2, 0); requires beta1 < beta2.
float preservation_contrastive_loss(float lp, float lrnd, float lneg, float beta1,
                                    float beta2);
ad::Tensor preservation_contrastive_loss(const ad::Tensor& lp, const ad::Tensor& lrnd,
                                         const ad::Tensor& lneg, float beta1, float beta2);

// Differentiable inverse FFT: re/im [C, F] -> time [C, length]. Imaginary
// parts at DC (and Nyquist for even length) are projected away, so their
// gradients are zero.
ad::Tensor irfft_op(const ad::Tensor& re, const ad::Tensor& im, int length);

// Differentiable mix + inverse FFT for generator training. pmap [N, F] in
// [0,1]; orig/augmented hold one spectrum per sample (constants on the tape);
// output [N, C, L].
ad::Tensor mix_irfft_op(const ad::Tensor& pmap, const std::vector<dsp::HalfSpectrum>& orig,
                        const std::vector<dsp::HalfSpectrum>& augmented);

}  // namespace simpsi::psi
