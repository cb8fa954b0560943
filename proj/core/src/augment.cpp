#include "simpsi/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace simpsi::aug {

namespace {

const std::unordered_map<std::string, Kind>& kind_table() {
  static const std::unordered_map<std::string, Kind> table = {
      {"none", Kind::none},
      {"jitter", Kind::jitter},
      {"scale", Kind::scale},
      {"shift", Kind::shift},
      {"magnitude_warp", Kind::magnitude_warp},
      {"time_warp", Kind::time_warp},
      {"permute", Kind::permute},
      {"dropout", Kind::dropout},
      {"freq_mask", Kind::freq_mask},
      {"freq_mix", Kind::freq_mix},
      {"freq_add", Kind::freq_add},
      {"scale_shift_jitter", Kind::scale_shift_jitter},
  };
  return table;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("augment: " + what);
}

// n distinct integers from [lo, hi], ascending. n is clamped to the range size.
std::vector<int> sample_distinct(rng::RngStream& rng, int lo, int hi, int n) {
  const int count = hi - lo + 1;
  if (count <= 0 || n <= 0) return {};
  n = std::min(n, count);
  std::unordered_set<int> seen;
  seen.reserve(static_cast<size_t>(n) * 2);
  while (static_cast<int>(seen.size()) < n) {
    seen.insert(static_cast<int>(rng.uniform_int(lo, hi)));
  }
  std::vector<int> out(seen.begin(), seen.end());
  std::sort(out.begin(), out.end());
  return out;
}

float channel_std(const dsp::TimeSeries& x, int c) {
  double mean = 0.0;
  for (int t = 0; t < x.length; ++t) mean += x.at(c, t);
  mean /= x.length;
  double var = 0.0;
  for (int t = 0; t < x.length; ++t) {
    const double d = x.at(c, t) - mean;
    var += d * d;
  }
  return static_cast<float>(std::sqrt(var / x.length));
}

dsp::TimeSeries jitter_sampled(const AugmentSpec& spec, const dsp::TimeSeries& x,
                               rng::RngStream& rng) {
  dsp::TimeSeries out = x;
  for (int c = 0; c < x.channels; ++c) {
    const float sigma =
        spec.jitter_relative ? spec.jitter_sigma * channel_std(x, c) : spec.jitter_sigma;
    for (int t = 0; t < x.length; ++t) {
      out.at(c, t) += sigma * static_cast<float>(rng.normal());
    }
  }
  return out;
}

dsp::TimeSeries permute_sampled(const AugmentSpec& spec, const dsp::TimeSeries& x,
                                rng::RngStream& rng) {
  const int k = static_cast<int>(
      rng.uniform_int(1, std::min<std::int64_t>(spec.max_segments, x.length)));
  std::vector<int> bounds = sample_distinct(rng, 1, x.length - 1, k - 1);
  std::vector<int> order(bounds.size() + 1);
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return permute_by(x, bounds, order);
}

}  // namespace

Kind kind_from_string(const std::string& name) {
  auto it = kind_table().find(name);
  if (it == kind_table().end()) {
    throw std::invalid_argument("augment: unknown kind '" + name + "'");
  }
  return it->second;
}

std::string kind_to_string(Kind kind) {
  for (const auto& [name, k] : kind_table()) {
    if (k == kind) return name;
  }
  throw std::invalid_argument("augment: unmapped kind");
}

void validate(const AugmentSpec& spec) {
  require(spec.jitter_sigma >= 0.0f, "jitter_sigma must be >= 0");
  require(spec.scale_sigma >= 0.0f, "scale_sigma must be >= 0");
  require(spec.shift_sigma >= 0.0f, "shift_sigma must be >= 0");
  require(spec.warp_sigma >= 0.0f, "warp_sigma must be >= 0");
  require(spec.warp_knots >= 2, "warp_knots must be >= 2");
  require(spec.max_segments >= 1, "max_segments must be >= 1");
  require(spec.dropout_p >= 0.0f && spec.dropout_p <= 1.0f, "dropout_p must be in [0, 1]");
  require(spec.mask_ratio >= 0.0f && spec.mask_ratio <= 1.0f, "mask_ratio must be in [0, 1]");
  require(spec.mix_ratio >= 0.0f && spec.mix_ratio <= 1.0f, "mix_ratio must be in [0, 1]");
  require(spec.add_ratio >= 0.0f && spec.add_ratio <= 1.0f, "add_ratio must be in [0, 1]");
  require(spec.add_alpha >= 0.0f, "add_alpha must be >= 0");
}

std::vector<float> spline_curve(const std::vector<float>& knots, int length) {
  const int k = static_cast<int>(knots.size());
  if (k == 0) throw std::invalid_argument("spline_curve: no knots");
  std::vector<float> out(static_cast<size_t>(length));
  if (length <= 0) return out;
  if (k == 1 || length == 1) {
    std::fill(out.begin(), out.end(), knots[0]);
    return out;
  }
  const double h = static_cast<double>(length - 1) / (k - 1);

  // natural spline: tridiagonal solve for second derivatives M, M[0]=M[k-1]=0
  std::vector<double> m(static_cast<size_t>(k), 0.0);
  if (k > 2) {
    const int n = k - 2;
    std::vector<double> diag(static_cast<size_t>(n), 4.0);
    std::vector<double> rhs(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      rhs[static_cast<size_t>(i)] =
          6.0 * (knots[static_cast<size_t>(i)] - 2.0 * knots[static_cast<size_t>(i) + 1] +
                 knots[static_cast<size_t>(i) + 2]) /
          (h * h);
    }
    for (int i = 1; i < n; ++i) {
      const double w = 1.0 / diag[static_cast<size_t>(i) - 1];
      diag[static_cast<size_t>(i)] -= w;
      rhs[static_cast<size_t>(i)] -= w * rhs[static_cast<size_t>(i) - 1];
    }
    for (int i = n - 1; i >= 0; --i) {
      double v = rhs[static_cast<size_t>(i)];
      if (i + 1 < n) v -= m[static_cast<size_t>(i) + 2];
      m[static_cast<size_t>(i) + 1] = v / diag[static_cast<size_t>(i)];
    }
  }

  for (int t = 0; t < length; ++t) {
    int seg = std::min(static_cast<int>(t / h), k - 2);
    const double s = t - seg * h;
    const double y0 = knots[static_cast<size_t>(seg)];
    const double y1 = knots[static_cast<size_t>(seg) + 1];
    const double m0 = m[static_cast<size_t>(seg)];
    const double m1 = m[static_cast<size_t>(seg) + 1];
    const double val = y0 + s * ((y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0) +
                       s * s * m0 / 2.0 + s * s * s * (m1 - m0) / (6.0 * h);
    out[static_cast<size_t>(t)] = static_cast<float>(val);
  }
  return out;
}

dsp::TimeSeries scale_by(const dsp::TimeSeries& x, float s) {
  dsp::TimeSeries out = x;
  for (auto& v : out.data) v *= s;
  return out;
}

dsp::TimeSeries shift_by(const dsp::TimeSeries& x, const std::vector<float>& offsets) {
  require(static_cast<int>(offsets.size()) == x.channels, "shift offsets must be per channel");
  dsp::TimeSeries out = x;
  for (int c = 0; c < x.channels; ++c) {
    for (int t = 0; t < x.length; ++t) out.at(c, t) += offsets[static_cast<size_t>(c)];
  }
  return out;
}

dsp::TimeSeries magnitude_warp_by(const dsp::TimeSeries& x,
                                  const std::vector<std::vector<float>>& knots) {
  require(static_cast<int>(knots.size()) == x.channels,
          "magnitude_warp needs one knot row per channel");
  dsp::TimeSeries out = x;
  for (int c = 0; c < x.channels; ++c) {
    const std::vector<float> curve = spline_curve(knots[static_cast<size_t>(c)], x.length);
    for (int t = 0; t < x.length; ++t) out.at(c, t) *= curve[static_cast<size_t>(t)];
  }
  return out;
}

dsp::TimeSeries time_warp_by(const dsp::TimeSeries& x, const std::vector<float>& speeds) {
  require(speeds.size() >= 2, "time_warp needs at least two knot speeds");
  for (float s : speeds) require(s > 0.0f, "time_warp speeds must be positive");
  if (x.length <= 1) return x;

  const int k = static_cast<int>(speeds.size());
  const int last = x.length - 1;
  const double h = static_cast<double>(last) / (k - 1);

  // piecewise-linear speed profile at integer positions
  std::vector<double> speed(static_cast<size_t>(x.length));
  for (int t = 0; t < x.length; ++t) {
    const int seg = std::min(static_cast<int>(t / h), k - 2);
    const double frac = (t - seg * h) / h;
    speed[static_cast<size_t>(t)] = (1.0 - frac) * speeds[static_cast<size_t>(seg)] +
                                    frac * speeds[static_cast<size_t>(seg) + 1];
  }

  // integrate to a monotone source position, then pin endpoints to [0, last]
  std::vector<double> pos(static_cast<size_t>(x.length), 0.0);
  for (int t = 1; t < x.length; ++t) {
    pos[static_cast<size_t>(t)] = pos[static_cast<size_t>(t) - 1] +
                                  0.5 * (speed[static_cast<size_t>(t) - 1] +
                                         speed[static_cast<size_t>(t)]);
  }
  const double total = pos[static_cast<size_t>(last)];
  dsp::TimeSeries out(x.channels, x.length);
  for (int t = 0; t < x.length; ++t) {
    const double src = pos[static_cast<size_t>(t)] * last / total;
    const int lo = std::min(static_cast<int>(src), last - 1);
    const double frac = src - lo;
    for (int c = 0; c < x.channels; ++c) {
      out.at(c, t) = static_cast<float>((1.0 - frac) * x.at(c, lo) + frac * x.at(c, lo + 1));
    }
  }
  return out;
}

dsp::TimeSeries permute_by(const dsp::TimeSeries& x, const std::vector<int>& bounds,
                           const std::vector<int>& order) {
  const int k = static_cast<int>(bounds.size()) + 1;
  require(static_cast<int>(order.size()) == k, "permute order must cover every segment");
  std::vector<int> edges;
  edges.push_back(0);
  for (int b : bounds) {
    require(b > edges.back() && b < x.length, "permute bounds must be ascending interior cuts");
    edges.push_back(b);
  }
  edges.push_back(x.length);

  std::vector<bool> seen(static_cast<size_t>(k), false);
  for (int o : order) {
    require(o >= 0 && o < k && !seen[static_cast<size_t>(o)], "permute order must be a permutation");
    seen[static_cast<size_t>(o)] = true;
  }

  dsp::TimeSeries out(x.channels, x.length);
  for (int c = 0; c < x.channels; ++c) {
    int dst = 0;
    for (int seg : order) {
      const int begin = edges[static_cast<size_t>(seg)];
      const int end = edges[static_cast<size_t>(seg) + 1];
      for (int t = begin; t < end; ++t) out.at(c, dst++) = x.at(c, t);
    }
  }
  return out;
}

dsp::TimeSeries dropout_at(const dsp::TimeSeries& x, const std::vector<int>& times) {
  dsp::TimeSeries out = x;
  for (int t : times) {
    require(t >= 0 && t < x.length, "dropout index out of range");
    for (int c = 0; c < x.channels; ++c) out.at(c, t) = 0.0f;
  }
  return out;
}

dsp::TimeSeries freq_mask_bins(const dsp::TimeSeries& x, const std::vector<int>& bins) {
  dsp::HalfSpectrum spec = dsp::rfft(x);
  for (int b : bins) {
    require(b >= 0 && b < spec.bins(), "freq_mask bin out of range");
    for (int c = 0; c < spec.channels; ++c) spec.at(c, b) = {0.0f, 0.0f};
  }
  return dsp::irfft(spec);
}

dsp::TimeSeries freq_mix_bins(const dsp::TimeSeries& x, const dsp::TimeSeries& donor,
                              const std::vector<int>& bins) {
  require(donor.channels == x.channels && donor.length == x.length,
          "freq_mix donor shape must match");
  dsp::HalfSpectrum spec = dsp::rfft(x);
  dsp::HalfSpectrum dspec = dsp::rfft(donor);
  for (int b : bins) {
    require(b >= 0 && b < spec.bins(), "freq_mix bin out of range");
    for (int c = 0; c < spec.channels; ++c) spec.at(c, b) = dspec.at(c, b);
  }
  return dsp::irfft(spec);
}

dsp::TimeSeries freq_add_bins(const dsp::TimeSeries& x, const std::vector<int>& bins,
                              float alpha) {
  dsp::HalfSpectrum spec = dsp::rfft(x);
  for (int c = 0; c < spec.channels; ++c) {
    float peak = 0.0f;
    for (int b = 0; b < spec.bins(); ++b) peak = std::max(peak, std::abs(spec.at(c, b)));
    const float amp = alpha * peak;
    for (int b : bins) {
      require(b >= 0 && b < spec.bins(), "freq_add bin out of range");
      spec.at(c, b) += std::complex<float>(amp, 0.0f);  // zero-phase boost
    }
  }
  return dsp::irfft(spec);
}

dsp::TimeSeries apply(const AugmentSpec& spec, const dsp::TimeSeries& x,
                      rng::RngStream& rng, const dsp::TimeSeries* donor) {
  validate(spec);
  require(x.channels > 0 && x.length > 0, "empty input");
  const int half = x.length / 2 + 1;

  switch (spec.kind) {
    case Kind::none:
      return x;
    case Kind::jitter:
      return jitter_sampled(spec, x, rng);
    case Kind::scale:
      return scale_by(x, 1.0f + spec.scale_sigma * static_cast<float>(rng.normal()));
    case Kind::shift: {
      std::vector<float> offsets(static_cast<size_t>(x.channels));
      for (auto& o : offsets) o = spec.shift_sigma * static_cast<float>(rng.normal());
      return shift_by(x, offsets);
    }
    case Kind::magnitude_warp: {
      std::vector<std::vector<float>> knots(static_cast<size_t>(x.channels));
      for (auto& row : knots) {
        row.resize(static_cast<size_t>(spec.warp_knots));
        for (auto& v : row) v = 1.0f + spec.warp_sigma * static_cast<float>(rng.normal());
      }
      return magnitude_warp_by(x, knots);
    }
    case Kind::time_warp: {
      std::vector<float> speeds(static_cast<size_t>(spec.warp_knots));
      for (auto& s : speeds) {
        s = std::max(0.05f, 1.0f + spec.warp_sigma * static_cast<float>(rng.normal()));
      }
      return time_warp_by(x, speeds);
    }
    case Kind::permute:
      return permute_sampled(spec, x, rng);
    case Kind::dropout: {
      std::vector<int> times;
      for (int t = 0; t < x.length; ++t) {
        if (rng.next_double() < spec.dropout_p) times.push_back(t);
      }
      return dropout_at(x, times);
    }
    case Kind::freq_mask: {
      const int n = static_cast<int>(spec.mask_ratio * half);
      return freq_mask_bins(x, sample_distinct(rng, 1, half - 1, n));  // DC spared
    }
    case Kind::freq_mix: {
      require(donor != nullptr, "freq_mix requires a donor sample");
      const int n = static_cast<int>(spec.mix_ratio * half);
      return freq_mix_bins(x, *donor, sample_distinct(rng, 0, half - 1, n));
    }
    case Kind::freq_add: {
      const int n = static_cast<int>(spec.add_ratio * half);
      return freq_add_bins(x, sample_distinct(rng, 1, half - 1, n), spec.add_alpha);  // DC spared
    }
    case Kind::scale_shift_jitter: {
      dsp::TimeSeries out = jitter_sampled(spec, x, rng);
      std::vector<float> offsets(static_cast<size_t>(x.channels));
      for (auto& o : offsets) o = spec.shift_sigma * static_cast<float>(rng.normal());
      out = shift_by(out, offsets);
      return scale_by(out, 1.0f + spec.scale_sigma * static_cast<float>(rng.normal()));
    }
  }
  throw std::invalid_argument("augment: unmapped kind");
}

}  // namespace simpsi::aug
