#include "simpsi/fsk.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

// The .bin files are defined as little-endian; this port assumes a matching
// host so raw buffers can be written directly.
static_assert(std::endian::native == std::endian::little,
              "dataset files are little-endian");

namespace simpsi::fsk {

namespace fs = std::filesystem;
using nlohmann::json;

void FskScheme::validate() const {
  if (order < 2) throw std::invalid_argument("fsk: order must be >= 2");
  if (static_cast<int>(carrier_bins.size()) != order) {
    throw std::invalid_argument("fsk: need exactly one carrier bin per symbol value");
  }
  if (samples_per_symbol < 1 || num_symbols < 1) {
    throw std::invalid_argument("fsk: samples_per_symbol and num_symbols must be >= 1");
  }
  if (length != samples_per_symbol * num_symbols) {
    throw std::invalid_argument("fsk: length must equal samples_per_symbol * num_symbols");
  }
  const int top = dsp::half_bins(length) - 1;  // Nyquist bin
  const int step = order > 1 ? carrier_bins[1] - carrier_bins[0] : 0;
  for (int i = 0; i < order; ++i) {
    const int b = carrier_bins[static_cast<size_t>(i)];
    if (b < 1 || b >= top) {
      throw std::invalid_argument("fsk: carrier bins must stay inside (0, Nyquist)");
    }
    if (i > 0 && carrier_bins[static_cast<size_t>(i)] - carrier_bins[static_cast<size_t>(i - 1)] != step) {
      throw std::invalid_argument("fsk: carrier bins must be equally spaced");
    }
  }
  if (step <= 0 && order > 1) {
    throw std::invalid_argument("fsk: carrier bins must be strictly increasing");
  }
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<float>::infinity()) {
    throw std::invalid_argument("fsk: snr_db must be finite or +inf");
  }
}

FskScheme make_scheme(int order, float snr_db, std::uint64_t seed) {
  FskScheme s;
  s.order = order;
  s.snr_db = snr_db;
  s.seed = seed;
  if (order == 8) {
    for (int b = 4; b <= 60; b += 8) s.carrier_bins.push_back(b);
  } else if (order == 32) {
    for (int b = 1; b <= 63; b += 2) s.carrier_bins.push_back(b);
  } else {
    throw std::invalid_argument("fsk: supported orders are 8 and 32");
  }
  s.validate();
  return s;
}

std::vector<std::vector<float>> symbol_templates(const FskScheme& scheme) {
  scheme.validate();
  std::vector<std::vector<float>> t(static_cast<size_t>(scheme.order));
  for (int m = 0; m < scheme.order; ++m) {
    auto& row = t[static_cast<size_t>(m)];
    row.resize(static_cast<size_t>(scheme.samples_per_symbol));
    const double b = scheme.carrier_bins[static_cast<size_t>(m)];
    for (int n = 0; n < scheme.samples_per_symbol; ++n) {
      row[static_cast<size_t>(n)] =
          static_cast<float>(std::cos(2.0 * M_PI * b * n / scheme.length));
    }
  }
  return t;
}

dsp::TimeSeries modulate(const std::vector<int>& symbols, const FskScheme& scheme) {
  const auto templates = symbol_templates(scheme);
  if (static_cast<int>(symbols.size()) != scheme.num_symbols) {
    throw std::invalid_argument("fsk: expected " + std::to_string(scheme.num_symbols) +
                                " symbols, got " + std::to_string(symbols.size()));
  }
  dsp::TimeSeries x(1, scheme.length);
  for (int j = 0; j < scheme.num_symbols; ++j) {
    const int s = symbols[static_cast<size_t>(j)];
    if (s < 0 || s >= scheme.order) {
      throw std::invalid_argument("fsk: symbol " + std::to_string(s) +
                                  " out of range [0, " + std::to_string(scheme.order) + ")");
    }
    const auto& tmpl = templates[static_cast<size_t>(s)];
    std::copy(tmpl.begin(), tmpl.end(),
              x.data.begin() + static_cast<size_t>(j) * scheme.samples_per_symbol);
  }
  return x;
}

dsp::TimeSeries add_awgn(const dsp::TimeSeries& x, float snr_db, rng::RngStream& rng) {
  if (std::isnan(snr_db)) throw std::invalid_argument("fsk: snr_db is NaN");
  if (std::isinf(snr_db)) {
    if (snr_db > 0) return x;  // noise disabled
    throw std::invalid_argument("fsk: snr_db must be finite or +inf");
  }
  double power = 0.0;
  for (float v : x.data) power += static_cast<double>(v) * v;
  power /= static_cast<double>(x.data.size());
  if (power == 0.0) {
    throw std::invalid_argument("fsk: zero-power signal has no defined SNR");
  }
  const double noise_std = std::sqrt(power * std::pow(10.0, -snr_db / 10.0));
  dsp::TimeSeries out = x;
  for (auto& v : out.data) {
    const double z = std::clamp(rng.normal(), -5.0, 5.0);
    v = static_cast<float>(v + noise_std * z);
  }
  return out;
}

std::vector<int> oracle_demodulate(const dsp::TimeSeries& x, const FskScheme& scheme) {
  const auto templates = symbol_templates(scheme);
  if (x.channels != 1 || x.length != scheme.length) {
    throw std::invalid_argument("fsk: signal shape does not match scheme");
  }
  std::vector<int> symbols(static_cast<size_t>(scheme.num_symbols));
  for (int j = 0; j < scheme.num_symbols; ++j) {
    const float* seg = x.data.data() + static_cast<size_t>(j) * scheme.samples_per_symbol;
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int m = 0; m < scheme.order; ++m) {
      const auto& tmpl = templates[static_cast<size_t>(m)];
      double d2 = 0.0;
      for (int n = 0; n < scheme.samples_per_symbol; ++n) {
        const double d = static_cast<double>(seg[n]) - tmpl[static_cast<size_t>(n)];
        d2 += d * d;
      }
      if (d2 < best) {
        best = d2;
        arg = m;
      }
    }
    symbols[static_cast<size_t>(j)] = arg;
  }
  return symbols;
}

FskDataset generate_dataset(const FskScheme& scheme, const SplitSizes& sizes,
                            std::uint64_t seed) {
  scheme.validate();
  if (sizes.train < 1 || sizes.val < 1 || sizes.test < 1) {
    throw std::invalid_argument("fsk: split sizes must be positive");
  }
  FskDataset ds;
  ds.scheme = scheme;
  ds.scheme.seed = seed;
  ds.sizes = sizes;
  const int n = sizes.total();
  ds.signals.resize(static_cast<size_t>(n) * scheme.length);
  ds.labels.resize(static_cast<size_t>(n) * scheme.num_symbols);

  const rng::RngStream root(seed);
  const struct {
    const char* name;
    int count;
  } splits[] = {{"train", sizes.train}, {"val", sizes.val}, {"test", sizes.test}};

  int base = 0;
  std::vector<int> symbols(static_cast<size_t>(scheme.num_symbols));
  for (const auto& split : splits) {
    const rng::RngStream split_stream = root.fork(rng::fnv1a64(split.name));
    for (int i = 0; i < split.count; ++i) {
      rng::RngStream sample = split_stream.fork(static_cast<std::uint64_t>(i));
      for (auto& s : symbols) {
        s = static_cast<int>(sample.uniform_int(0, scheme.order - 1));
      }
      const dsp::TimeSeries noisy =
          add_awgn(modulate(symbols, scheme), scheme.snr_db, sample);
      const int idx = base + i;
      std::copy(noisy.data.begin(), noisy.data.end(),
                ds.signals.begin() + static_cast<size_t>(idx) * scheme.length);
      for (int j = 0; j < scheme.num_symbols; ++j) {
        ds.labels[static_cast<size_t>(idx) * scheme.num_symbols + j] =
            static_cast<std::uint16_t>(symbols[static_cast<size_t>(j)]);
      }
    }
    base += split.count;
  }
  return ds;
}

dsp::TimeSeries FskDataset::signal(int i) const {
  if (i < 0 || i >= size()) throw std::out_of_range("fsk: sample index out of range");
  const float* row = signals.data() + static_cast<size_t>(i) * scheme.length;
  return dsp::TimeSeries(1, scheme.length, std::vector<float>(row, row + scheme.length));
}

std::vector<int> FskDataset::label_row(int i) const {
  if (i < 0 || i >= size()) throw std::out_of_range("fsk: sample index out of range");
  const std::uint16_t* row = labels.data() + static_cast<size_t>(i) * scheme.num_symbols;
  return std::vector<int>(row, row + scheme.num_symbols);
}

std::pair<int, int> FskDataset::split_range(const std::string& split) const {
  if (split == "train") return {0, sizes.train};
  if (split == "val") return {sizes.train, sizes.train + sizes.val};
  if (split == "test") return {sizes.train + sizes.val, sizes.total()};
  throw std::invalid_argument("fsk: unknown split " + split);
}

namespace {

constexpr int kManifestVersion = 1;

json scheme_to_json(const FskScheme& s) {
  json j;
  j["order"] = s.order;
  j["carrier_bins"] = s.carrier_bins;
  j["samples_per_symbol"] = s.samples_per_symbol;
  j["length"] = s.length;
  j["num_symbols"] = s.num_symbols;
  if (std::isinf(s.snr_db)) {
    j["snr_db"] = "inf";  // JSON has no infinity literal
  } else {
    j["snr_db"] = s.snr_db;
  }
  j["seed"] = s.seed;
  return j;
}

const json& require_field(const json& j, const char* name, const char* where) {
  auto it = j.find(name);
  if (it == j.end()) {
    throw ManifestError(std::string(where) + ": missing field '" + name + "'");
  }
  return *it;
}

template <typename T>
T field_as(const json& j, const char* name, const char* where) {
  try {
    return require_field(j, name, where).get<T>();
  } catch (const json::exception&) {
    throw ManifestError(std::string(where) + ": field '" + name + "' has the wrong type");
  }
}

FskScheme scheme_from_json(const json& j) {
  FskScheme s;
  s.order = field_as<int>(j, "order", "manifest.json: scheme");
  s.carrier_bins = field_as<std::vector<int>>(j, "carrier_bins", "manifest.json: scheme");
  s.samples_per_symbol = field_as<int>(j, "samples_per_symbol", "manifest.json: scheme");
  s.length = field_as<int>(j, "length", "manifest.json: scheme");
  s.num_symbols = field_as<int>(j, "num_symbols", "manifest.json: scheme");
  const json& snr = require_field(j, "snr_db", "manifest.json: scheme");
  if (snr.is_string() && snr.get<std::string>() == "inf") {
    s.snr_db = std::numeric_limits<float>::infinity();
  } else if (snr.is_number()) {
    s.snr_db = snr.get<float>();
  } else {
    throw ManifestError("manifest.json: scheme: field 'snr_db' has the wrong type");
  }
  s.seed = field_as<std::uint64_t>(j, "seed", "manifest.json: scheme");
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ManifestError(std::string("manifest.json: scheme: ") + e.what());
  }
  return s;
}

void write_file(const fs::path& path, const char* bytes, size_t count) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DatasetError("fsk: cannot open " + path.string() + " for writing");
  f.write(bytes, static_cast<std::streamsize>(count));
  if (!f) throw DatasetError("fsk: short write to " + path.string());
}

// Reads exactly expected_bytes; smaller files are truncation, larger files
// contradict the manifest shape.
void read_file(const fs::path& path, char* bytes, size_t expected_bytes) {
  std::error_code ec;
  const auto actual = fs::file_size(path, ec);
  if (ec) throw DatasetError("fsk: cannot stat " + path.string());
  if (actual < expected_bytes) {
    throw TruncatedError(path.filename().string() + ": " + std::to_string(actual) +
                         " bytes, manifest shape implies " +
                         std::to_string(expected_bytes));
  }
  if (actual > expected_bytes) {
    throw ShapeError(path.filename().string() + ": " + std::to_string(actual) +
                     " bytes disagrees with manifest shape (" +
                     std::to_string(expected_bytes) + ")");
  }
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DatasetError("fsk: cannot open " + path.string());
  f.read(bytes, static_cast<std::streamsize>(expected_bytes));
  if (static_cast<size_t>(f.gcount()) != expected_bytes) {
    throw TruncatedError(path.filename().string() + ": short read");
  }
}

}  // namespace

void save_dataset(const FskDataset& ds, const std::string& dir) {
  ds.scheme.validate();
  const int n = ds.size();
  if (ds.signals.size() != static_cast<size_t>(n) * ds.scheme.length ||
      ds.labels.size() != static_cast<size_t>(n) * ds.scheme.num_symbols) {
    throw ShapeError("fsk: dataset arrays do not match split sizes");
  }
  fs::create_directories(dir);

  json manifest;
  manifest["version"] = kManifestVersion;
  manifest["dtype"] = "f32le";
  manifest["signal_shape"] = {n, 1, ds.scheme.length};
  manifest["label_dtype"] = "u16le";
  manifest["label_shape"] = {n, ds.scheme.num_symbols};
  manifest["scheme"] = scheme_to_json(ds.scheme);
  manifest["seed"] = ds.scheme.seed;
  manifest["splits"] = {
      {"train", {0, ds.sizes.train}},
      {"val", {ds.sizes.train, ds.sizes.train + ds.sizes.val}},
      {"test", {ds.sizes.train + ds.sizes.val, n}},
  };

  const std::string text = manifest.dump(2) + "\n";
  write_file(fs::path(dir) / "manifest.json", text.data(), text.size());
  write_file(fs::path(dir) / "signals.bin",
             reinterpret_cast<const char*>(ds.signals.data()),
             ds.signals.size() * sizeof(float));
  write_file(fs::path(dir) / "labels.bin",
             reinterpret_cast<const char*>(ds.labels.data()),
             ds.labels.size() * sizeof(std::uint16_t));
}

FskDataset load_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f) throw ManifestError("manifest.json: cannot open " + manifest_path.string());
  json manifest;
  try {
    f >> manifest;
  } catch (const json::exception& e) {
    throw ManifestError(std::string("manifest.json: ") + e.what());
  }

  const int version = field_as<int>(manifest, "version", "manifest.json");
  if (version != kManifestVersion) {
    throw VersionError("manifest.json: version " + std::to_string(version) +
                       " not supported (expected " + std::to_string(kManifestVersion) + ")");
  }
  if (field_as<std::string>(manifest, "dtype", "manifest.json") != "f32le") {
    throw ManifestError("manifest.json: field 'dtype' must be \"f32le\"");
  }
  if (field_as<std::string>(manifest, "label_dtype", "manifest.json") != "u16le") {
    throw ManifestError("manifest.json: field 'label_dtype' must be \"u16le\"");
  }

  FskDataset ds;
  ds.scheme = scheme_from_json(require_field(manifest, "scheme", "manifest.json"));

  const auto sig_shape = field_as<std::vector<std::int64_t>>(manifest, "signal_shape",
                                                             "manifest.json");
  const auto lab_shape = field_as<std::vector<std::int64_t>>(manifest, "label_shape",
                                                             "manifest.json");
  if (sig_shape.size() != 3 || sig_shape[1] != 1 || sig_shape[2] != ds.scheme.length ||
      sig_shape[0] < 1) {
    throw ShapeError("manifest.json: signal_shape must be [N, 1, " +
                     std::to_string(ds.scheme.length) + "]");
  }
  const std::int64_t n = sig_shape[0];
  if (lab_shape.size() != 2 || lab_shape[0] != n ||
      lab_shape[1] != ds.scheme.num_symbols) {
    throw ShapeError("manifest.json: label_shape must be [N, " +
                     std::to_string(ds.scheme.num_symbols) + "] with matching N");
  }

  const json& splits = require_field(manifest, "splits", "manifest.json");
  auto range_of = [&](const char* name) {
    const auto r = field_as<std::vector<std::int64_t>>(splits, name,
                                                       "manifest.json: splits");
    if (r.size() != 2 || r[0] < 0 || r[1] < r[0]) {
      throw ShapeError(std::string("manifest.json: splits: bad range for '") + name + "'");
    }
    return r;
  };
  const auto tr = range_of("train");
  const auto va = range_of("val");
  const auto te = range_of("test");
  if (tr[0] != 0 || va[0] != tr[1] || te[0] != va[1] || te[1] != n) {
    throw ShapeError("manifest.json: splits must tile [0, N) as train, val, test");
  }
  ds.sizes.train = static_cast<int>(tr[1] - tr[0]);
  ds.sizes.val = static_cast<int>(va[1] - va[0]);
  ds.sizes.test = static_cast<int>(te[1] - te[0]);
  if (ds.sizes.train < 1 || ds.sizes.val < 1 || ds.sizes.test < 1) {
    throw ShapeError("manifest.json: splits must all be non-empty");
  }

  ds.signals.resize(static_cast<size_t>(n) * ds.scheme.length);
  ds.labels.resize(static_cast<size_t>(n) * ds.scheme.num_symbols);
  read_file(fs::path(dir) / "signals.bin", reinterpret_cast<char*>(ds.signals.data()),
            ds.signals.size() * sizeof(float));
  read_file(fs::path(dir) / "labels.bin", reinterpret_cast<char*>(ds.labels.data()),
            ds.labels.size() * sizeof(std::uint16_t));

  for (std::uint16_t y : ds.labels) {
    if (y >= static_cast<std::uint16_t>(ds.scheme.order)) {
      throw DatasetError("labels.bin: symbol value " + std::to_string(y) +
                         " out of range [0, " + std::to_string(ds.scheme.order) + ")");
    }
  }
  return ds;
}

}  // namespace simpsi::fsk
