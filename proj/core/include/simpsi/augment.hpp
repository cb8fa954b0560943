#pragma once

#include <string>
#include <vector>

#include "simpsi/dsp.hpp"
#include "simpsi/rng.hpp"

namespace simpsi::aug {

enum class Kind {
  none,
  jitter,
  scale,
  shift,
  magnitude_warp,
  time_warp,
  permute,
  dropout,
  freq_mask,
  freq_mix,
  freq_add,
  scale_shift_jitter,
};

Kind kind_from_string(const std::string& name);
std::string kind_to_string(Kind kind);

struct AugmentSpec {
  Kind kind = Kind::none;

  // jitter: noise sigma; relative means sigma scales the per-channel std.
  float jitter_sigma = 0.05f;
  bool jitter_relative = true;

  float scale_sigma = 0.1f;   // one scalar per sample, s ~ N(1, sigma^2)
  float shift_sigma = 0.1f;   // one offset per channel, h ~ N(0, sigma^2)

  int warp_knots = 4;         // magnitude_warp and time_warp
  float warp_sigma = 0.2f;

  int max_segments = 5;       // permute
  float dropout_p = 0.1f;     // per-time-index column mask probability

  float mask_ratio = 0.1f;    // freq_mask: fraction of bins zeroed
  float mix_ratio = 0.1f;     // freq_mix: fraction of bins taken from donor
  float add_ratio = 0.1f;     // freq_add: fraction of bins boosted
  float add_alpha = 0.5f;     // freq_add: magnitude relative to max |x_f|
};

// Throws std::invalid_argument on out-of-range parameters.
void validate(const AugmentSpec& spec);

// Samples the augmentation's randomness from `rng` and applies it. Output
// shape always equals input shape. `donor` is consulted only by freq_mix
// (missing donor there is an error; mismatched shape too).
dsp::TimeSeries apply(const AugmentSpec& spec, const dsp::TimeSeries& x,
                      rng::RngStream& rng, const dsp::TimeSeries* donor = nullptr);

// Deterministic cores behind the sampler, exposed so tests can pin the draws.
dsp::TimeSeries scale_by(const dsp::TimeSeries& x, float s);
dsp::TimeSeries shift_by(const dsp::TimeSeries& x, const std::vector<float>& offsets);
// knots[c] holds the per-channel multiplier curve knots, cubic-interpolated
// over evenly spaced positions across the time axis.
dsp::TimeSeries magnitude_warp_by(const dsp::TimeSeries& x,
                                  const std::vector<std::vector<float>>& knots);
// speeds: positive knot speeds, linearly interpolated into a monotone time
// warp with fixed endpoints; all channels share the warp.
dsp::TimeSeries time_warp_by(const dsp::TimeSeries& x, const std::vector<float>& speeds);
// bounds: sorted interior cut points; order: permutation of the segments.
dsp::TimeSeries permute_by(const dsp::TimeSeries& x, const std::vector<int>& bounds,
                           const std::vector<int>& order);
dsp::TimeSeries dropout_at(const dsp::TimeSeries& x, const std::vector<int>& times);
dsp::TimeSeries freq_mask_bins(const dsp::TimeSeries& x, const std::vector<int>& bins);
dsp::TimeSeries freq_mix_bins(const dsp::TimeSeries& x, const dsp::TimeSeries& donor,
                              const std::vector<int>& bins);
dsp::TimeSeries freq_add_bins(const dsp::TimeSeries& x, const std::vector<int>& bins,
                              float alpha);

// Natural cubic spline through K values at evenly spaced positions over
// [0, length-1], evaluated at every integer t. K=1 is constant, K=2 linear.
std::vector<float> spline_curve(const std::vector<float>& knots, int length);

}  // namespace simpsi::aug
