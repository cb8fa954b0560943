#pragma once

#include <complex>
#include <vector>

namespace simpsi::dsp {

// Number of half-spectrum bins for a real signal of `length` samples.
inline int half_bins(int length) { return length / 2 + 1; }

// Real-valued multichannel sequence, row-major [channels, length].
struct TimeSeries {
  int channels = 0;
  int length = 0;
  std::vector<float> data;

  TimeSeries() = default;
  TimeSeries(int channels, int length);
  TimeSeries(int channels, int length, std::vector<float> values);

  float& at(int c, int t) { return data[static_cast<size_t>(c) * length + t]; }
  float at(int c, int t) const { return data[static_cast<size_t>(c) * length + t]; }
  const float* row(int c) const { return data.data() + static_cast<size_t>(c) * length; }
  float* row(int c) { return data.data() + static_cast<size_t>(c) * length; }
};

// First floor(L/2)+1 FFT bins of a real signal, per channel. `origin_length`
// is the time-domain length needed to invert.
struct HalfSpectrum {
  int channels = 0;
  int origin_length = 0;
  std::vector<std::complex<float>> data;  // row-major [channels, bins()]

  HalfSpectrum() = default;
  HalfSpectrum(int channels, int origin_length);

  int bins() const { return half_bins(origin_length); }
  std::complex<float>& at(int c, int k) {
    return data[static_cast<size_t>(c) * bins() + k];
  }
  std::complex<float> at(int c, int k) const {
    return data[static_cast<size_t>(c) * bins() + k];
  }
  const std::complex<float>* row(int c) const {
    return data.data() + static_cast<size_t>(c) * bins();
  }
  std::complex<float>* row(int c) {
    return data.data() + static_cast<size_t>(c) * bins();
  }
};

// Full complex spectrum [channels, length]; helper form for complex series.
struct FullSpectrum {
  int channels = 0;
  int length = 0;
  std::vector<std::complex<float>> data;
};

// Unnormalized forward DFT, X[k] = sum_n x[n] exp(-2*pi*i*k*n/L). Radix-2 for
// powers of two, Bluestein for arbitrary lengths. Throws on non-finite input.
template <typename R>
std::vector<std::complex<R>> fft(const std::vector<std::complex<R>>& x);

// Inverse DFT with 1/L normalization; ifft(fft(x)) == x within tolerance.
template <typename R>
std::vector<std::complex<R>> ifft(const std::vector<std::complex<R>>& x);

// Real input -> first floor(L/2)+1 bins of its DFT.
template <typename R>
std::vector<std::complex<R>> rfft_row(const R* x, int length);

// Half spectrum -> the unique real signal of `length` samples whose rfft
// matches after projection (imag parts at DC and Nyquist are discarded).
template <typename R>
std::vector<R> irfft_row(const std::complex<R>* s, int length);

HalfSpectrum rfft(const TimeSeries& x);
TimeSeries irfft(const HalfSpectrum& s);

// Per-channel full DFT of a real series.
FullSpectrum full_fft(const TimeSeries& x);

// Elementwise modulus, row-major [channels, bins].
std::vector<float> magnitude(const HalfSpectrum& s);

}  // namespace simpsi::dsp
