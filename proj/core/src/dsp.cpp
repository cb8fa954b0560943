#include "simpsi/dsp.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <type_traits>
#include <unordered_map>

namespace simpsi::dsp {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Precomputed bit-reversal and twiddle tables for one radix-2 size. Twiddles
// are stored at double precision and cast at use, so one plan serves both
// float and double kernels.
struct Radix2Plan {
  int n = 0;
  std::vector<int> bitrev;
  // stage s covers butterflies of span 2^(s+1); twiddles[s][j] = exp(-i*pi*j/2^s)
  std::vector<std::vector<std::complex<double>>> twiddles;
};

std::shared_ptr<const Radix2Plan> radix2_plan(int n) {
  static std::mutex mu;
  static std::unordered_map<int, std::shared_ptr<const Radix2Plan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  auto plan = std::make_shared<Radix2Plan>();
  plan->n = n;
  plan->bitrev.resize(n);
  int log2n = 0;
  while ((1 << log2n) < n) ++log2n;
  for (int i = 0; i < n; ++i) {
    int r = 0;
    for (int b = 0; b < log2n; ++b) r |= ((i >> b) & 1) << (log2n - 1 - b);
    plan->bitrev[i] = r;
  }
  plan->twiddles.resize(log2n);
  for (int s = 0; s < log2n; ++s) {
    const int half = 1 << s;
    plan->twiddles[s].resize(half);
    for (int j = 0; j < half; ++j) {
      const double angle = -M_PI * j / half;
      plan->twiddles[s][j] = {std::cos(angle), std::sin(angle)};
    }
  }
  cache.emplace(n, plan);
  return plan;
}

// In-place radix-2 Cooley-Tukey; sign=-1 forward, +1 inverse (unscaled).
template <typename R>
void fft_pow2_inplace(std::vector<std::complex<R>>& a, int sign) {
  const int n = static_cast<int>(a.size());
  if (n == 1) return;
  const auto plan = radix2_plan(n);
  for (int i = 0; i < n; ++i) {
    const int j = plan->bitrev[i];
    if (i < j) std::swap(a[i], a[j]);
  }
  int stage = 0;
  for (int len = 2; len <= n; len <<= 1, ++stage) {
    const int half = len >> 1;
    const auto& tw = plan->twiddles[stage];
    for (int i = 0; i < n; i += len) {
      for (int j = 0; j < half; ++j) {
        const std::complex<R> w(static_cast<R>(tw[j].real()),
                                static_cast<R>(sign < 0 ? tw[j].imag() : -tw[j].imag()));
        const std::complex<R> u = a[i + j];
        const std::complex<R> v = a[i + j + half] * w;
        a[i + j] = u + v;
        a[i + j + half] = u - v;
      }
    }
  }
}

// Chirp-z (Bluestein) forward DFT for arbitrary length.
template <typename R>
std::vector<std::complex<R>> fft_bluestein(const std::vector<std::complex<R>>& x) {
  const int n = static_cast<int>(x.size());
  const int m = next_pow2(2 * n - 1);

  // chirp[k] = exp(-i*pi*k^2/n); angle reduced mod 2n before the trig call so
  // large k^2 does not lose precision.
  std::vector<std::complex<double>> chirp(n);
  for (int k = 0; k < n; ++k) {
    const std::int64_t k2 = static_cast<std::int64_t>(k) * k % (2 * n);
    const double angle = -M_PI * static_cast<double>(k2) / n;
    chirp[k] = {std::cos(angle), std::sin(angle)};
  }

  std::vector<std::complex<R>> a(m, std::complex<R>(0, 0));
  for (int k = 0; k < n; ++k) {
    a[k] = x[k] * std::complex<R>(static_cast<R>(chirp[k].real()),
                                  static_cast<R>(chirp[k].imag()));
  }
  std::vector<std::complex<R>> b(m, std::complex<R>(0, 0));
  for (int k = 0; k < n; ++k) {
    const std::complex<R> c(static_cast<R>(chirp[k].real()),
                            static_cast<R>(-chirp[k].imag()));
    b[k] = c;
    if (k > 0) b[m - k] = c;
  }

  fft_pow2_inplace(a, -1);
  fft_pow2_inplace(b, -1);
  for (int k = 0; k < m; ++k) a[k] *= b[k];
  fft_pow2_inplace(a, +1);
  const R scale = static_cast<R>(1) / static_cast<R>(m);

  std::vector<std::complex<R>> out(n);
  for (int k = 0; k < n; ++k) {
    const std::complex<R> c(static_cast<R>(chirp[k].real()),
                            static_cast<R>(chirp[k].imag()));
    out[k] = a[k] * scale * c;
  }
  return out;
}

// Non-power-of-two float transforms run the Bluestein convolution in double:
// the intermediate products grow with the padded size and would otherwise eat
// most of the single-precision budget.
std::vector<std::complex<float>> fft_bluestein_promoted(const std::vector<std::complex<float>>& x) {
  std::vector<std::complex<double>> w(x.size());
  for (size_t i = 0; i < x.size(); ++i) w[i] = {x[i].real(), x[i].imag()};
  w = fft_bluestein(w);
  std::vector<std::complex<float>> out(w.size());
  for (size_t i = 0; i < w.size(); ++i) {
    out[i] = {static_cast<float>(w[i].real()), static_cast<float>(w[i].imag())};
  }
  return out;
}

template <typename R>
std::vector<std::complex<R>> fft_arbitrary(const std::vector<std::complex<R>>& x) {
  if constexpr (std::is_same_v<R, float>) {
    return fft_bluestein_promoted(x);
  } else {
    return fft_bluestein(x);
  }
}

template <typename R>
void check_finite(const std::vector<std::complex<R>>& x, const char* op) {
  for (const auto& v : x) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw std::invalid_argument(std::string(op) + ": non-finite input");
    }
  }
}

}  // namespace

TimeSeries::TimeSeries(int channels, int length)
    : channels(channels), length(length),
      data(static_cast<size_t>(channels) * length, 0.0f) {
  if (channels < 1 || length < 1) {
    throw std::invalid_argument("TimeSeries: channels and length must be >= 1");
  }
}

TimeSeries::TimeSeries(int channels, int length, std::vector<float> values)
    : channels(channels), length(length), data(std::move(values)) {
  if (channels < 1 || length < 1) {
    throw std::invalid_argument("TimeSeries: channels and length must be >= 1");
  }
  if (data.size() != static_cast<size_t>(channels) * length) {
    throw std::invalid_argument("TimeSeries: data size does not match shape");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw std::invalid_argument("TimeSeries: non-finite value");
  }
}

HalfSpectrum::HalfSpectrum(int channels, int origin_length)
    : channels(channels), origin_length(origin_length),
      data(static_cast<size_t>(channels) * half_bins(origin_length)) {
  if (channels < 1 || origin_length < 1) {
    throw std::invalid_argument("HalfSpectrum: channels and length must be >= 1");
  }
}

template <typename R>
std::vector<std::complex<R>> fft(const std::vector<std::complex<R>>& x) {
  if (x.empty()) throw std::invalid_argument("fft: empty input");
  check_finite(x, "fft");
  if (is_pow2(static_cast<int>(x.size()))) {
    auto a = x;
    fft_pow2_inplace(a, -1);
    return a;
  }
  return fft_arbitrary(x);
}

template <typename R>
std::vector<std::complex<R>> ifft(const std::vector<std::complex<R>>& x) {
  if (x.empty()) throw std::invalid_argument("ifft: empty input");
  check_finite(x, "ifft");
  const int n = static_cast<int>(x.size());
  const R scale = static_cast<R>(1) / static_cast<R>(n);
  if (is_pow2(n)) {
    auto a = x;
    fft_pow2_inplace(a, +1);
    for (auto& v : a) v *= scale;
    return a;
  }
  // conj(fft(conj(x)))/n covers the Bluestein path
  std::vector<std::complex<R>> a(x.size());
  for (size_t i = 0; i < x.size(); ++i) a[i] = std::conj(x[i]);
  a = fft_arbitrary(a);
  for (auto& v : a) v = std::conj(v) * scale;
  return a;
}

template <typename R>
std::vector<std::complex<R>> rfft_row(const R* x, int length) {
  std::vector<std::complex<R>> in(length);
  for (int t = 0; t < length; ++t) in[t] = {x[t], 0};
  auto full = fft(in);
  full.resize(half_bins(length));
  return full;
}

template <typename R>
std::vector<R> irfft_row(const std::complex<R>* s, int length) {
  const int f = half_bins(length);
  std::vector<std::complex<R>> full(length);
  full[0] = {s[0].real(), 0};  // projection: drop imag at DC
  const bool even = (length % 2 == 0);
  const int last_paired = even ? f - 2 : f - 1;
  for (int k = 1; k <= last_paired; ++k) {
    full[k] = s[k];
    full[length - k] = std::conj(s[k]);
  }
  if (even && length >= 2) full[length / 2] = {s[f - 1].real(), 0};  // Nyquist
  auto inv = ifft(full);
  std::vector<R> out(length);
  for (int t = 0; t < length; ++t) out[t] = inv[t].real();
  return out;
}

HalfSpectrum rfft(const TimeSeries& x) {
  HalfSpectrum s(x.channels, x.length);
  const int f = s.bins();
  for (int c = 0; c < x.channels; ++c) {
    auto row = rfft_row(x.row(c), x.length);
    std::copy(row.begin(), row.end(), s.data.begin() + static_cast<size_t>(c) * f);
  }
  return s;
}

TimeSeries irfft(const HalfSpectrum& s) {
  const int f = s.bins();
  if (s.data.size() != static_cast<size_t>(s.channels) * f) {
    throw std::invalid_argument("irfft: bin count does not match origin_length");
  }
  TimeSeries x(s.channels, s.origin_length);
  for (int c = 0; c < s.channels; ++c) {
    auto row = irfft_row(s.row(c), s.origin_length);
    std::copy(row.begin(), row.end(), x.data.begin() + static_cast<size_t>(c) * s.origin_length);
  }
  return x;
}

FullSpectrum full_fft(const TimeSeries& x) {
  FullSpectrum s;
  s.channels = x.channels;
  s.length = x.length;
  s.data.resize(static_cast<size_t>(x.channels) * x.length);
  for (int c = 0; c < x.channels; ++c) {
    std::vector<std::complex<float>> in(x.length);
    for (int t = 0; t < x.length; ++t) in[t] = {x.at(c, t), 0.0f};
    auto out = fft(in);
    std::copy(out.begin(), out.end(), s.data.begin() + static_cast<size_t>(c) * x.length);
  }
  return s;
}

std::vector<float> magnitude(const HalfSpectrum& s) {
  std::vector<float> out(s.data.size());
  for (size_t i = 0; i < s.data.size(); ++i) out[i] = std::abs(s.data[i]);
  return out;
}

template std::vector<std::complex<float>> fft(const std::vector<std::complex<float>>&);
template std::vector<std::complex<double>> fft(const std::vector<std::complex<double>>&);
template std::vector<std::complex<float>> ifft(const std::vector<std::complex<float>>&);
template std::vector<std::complex<double>> ifft(const std::vector<std::complex<double>>&);
template std::vector<std::complex<float>> rfft_row(const float*, int);
template std::vector<std::complex<double>> rfft_row(const double*, int);
template std::vector<float> irfft_row(const std::complex<float>*, int);
template std::vector<double> irfft_row(const std::complex<double>*, int);

}  // namespace simpsi::dsp
