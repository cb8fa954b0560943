#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "simpsi/dsp.hpp"
#include "simpsi/rng.hpp"

namespace simpsi::fsk {

// M-ary FSK over single-channel signals: num_symbols segments of
// samples_per_symbol samples each, symbol value s transmitting
// cos(2*pi*carrier_bins[s]*n/length) with the phase reset at every segment
// start (n counts within the segment).
struct FskScheme {
  int order = 8;                   // M
  std::vector<int> carrier_bins;   // M equally spaced bins, away from DC and Nyquist
  int samples_per_symbol = 4;
  int length = 128;                // L
  int num_symbols = 32;            // S
  float snr_db = 10.0f;            // +inf disables noise
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

// The two standard schemes: order 8 uses bins {4, 12, ..., 60}, order 32
// every odd bin {1, 3, ..., 63}. Other orders are rejected.
FskScheme make_scheme(int order, float snr_db = 10.0f, std::uint64_t seed = 0);

struct SplitSizes {
  int train = 2304;
  int val = 288;
  int test = 288;

  int total() const { return train + val + test; }
};

// Signals are row-major [N, 1, length] and labels row-major [N, num_symbols];
// samples are ordered train, then val, then test.
struct FskDataset {
  FskScheme scheme;
  SplitSizes sizes;
  std::vector<float> signals;
  std::vector<std::uint16_t> labels;

  int size() const { return sizes.total(); }
  dsp::TimeSeries signal(int i) const;
  std::vector<int> label_row(int i) const;

  // [begin, end) sample indices for "train" | "val" | "test".
  std::pair<int, int> split_range(const std::string& split) const;
};

// The M per-symbol waveforms, each samples_per_symbol long.
std::vector<std::vector<float>> symbol_templates(const FskScheme& scheme);

dsp::TimeSeries modulate(const std::vector<int>& symbols, const FskScheme& scheme);

// Adds white Gaussian noise scaled so 10*log10(signal_power / noise_power)
// equals snr_db in expectation. Draws are clipped at five sigmas, which keeps
// every output sample inside max|clean| + 5*noise_std while shaving variance
// by well under a percent. snr_db = +inf returns the input unchanged.
dsp::TimeSeries add_awgn(const dsp::TimeSeries& x, float snr_db, rng::RngStream& rng);

// Maximum-likelihood detector for the AWGN channel: per segment, the template
// nearest in Euclidean distance (lowest index wins ties).
std::vector<int> oracle_demodulate(const dsp::TimeSeries& x, const FskScheme& scheme);

// Labels are drawn i.i.d. uniform over [0, M) from per-sample streams forked
// off per-split streams, so any split or sample can be regenerated
// independently and the result does not depend on generation order.
FskDataset generate_dataset(const FskScheme& scheme, const SplitSizes& sizes,
                            std::uint64_t seed);

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// manifest.json unreadable, or a field missing or of the wrong type
struct ManifestError : DatasetError {
  using DatasetError::DatasetError;
};
// manifest version not supported by this reader
struct VersionError : DatasetError {
  using DatasetError::DatasetError;
};
// a binary file is shorter than the manifest shape implies
struct TruncatedError : DatasetError {
  using DatasetError::DatasetError;
};
// shapes inconsistent within the manifest, or a file longer than implied
struct ShapeError : DatasetError {
  using DatasetError::DatasetError;
};

// Directory layout: manifest.json (version, dtypes, shapes, scheme, seed,
// split ranges), signals.bin (little-endian f32), labels.bin (little-endian
// u16). Round-trips are bit-exact.
void save_dataset(const FskDataset& ds, const std::string& dir);
FskDataset load_dataset(const std::string& dir);

}  // namespace simpsi::fsk
