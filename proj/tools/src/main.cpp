#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "simpsi/harness.hpp"

using namespace simpsi;
using nlohmann::json;

namespace {

// stdout carries exactly one JSON document per successful command; everything
// else (progress, errors) goes to stderr.
void emit(const json& doc) { std::cout << doc.dump(2) << "\n"; }

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(f), {});
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("SIMPSI_SEED");
  if (!s || !*s) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (errno != 0 || end == s || *end != '\0' || s[0] == '-') {
    throw std::invalid_argument("SIMPSI_SEED must be a nonnegative integer");
  }
  return static_cast<std::uint64_t>(v);
}

// --seed flag wins, then an explicit config/default source, then SIMPSI_SEED.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           const std::optional<std::uint64_t>& config_value) {
  if (flag) return *flag;
  if (config_value) return *config_value;
  if (const auto env = env_seed()) return *env;
  return 0;
}

float parse_snr(const std::string& text) {
  if (text == "inf") return std::numeric_limits<float>::infinity();
  char* end = nullptr;
  const float v = std::strtof(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0' || !std::isfinite(v)) {
    throw std::invalid_argument("--snr-db expects a finite number or 'inf'");
  }
  return v;
}

json scheme_json(const fsk::FskScheme& s) {
  json j{{"order", s.order},
         {"carrier_bins", s.carrier_bins},
         {"samples_per_symbol", s.samples_per_symbol},
         {"length", s.length},
         {"num_symbols", s.num_symbols},
         {"seed", s.seed}};
  if (std::isinf(s.snr_db)) {
    j["snr_db"] = "inf";
  } else {
    j["snr_db"] = s.snr_db;
  }
  return j;
}

void check_model_shape(const models::DemodulatorConfig& mc, const fsk::FskScheme& sc,
                       const char* cmd) {
  if (mc.in_channels != 1 || mc.input_length != sc.length ||
      mc.num_symbols != sc.num_symbols || mc.num_classes != sc.order) {
    throw std::invalid_argument(std::string(cmd) +
                                ": checkpoint was built for a different dataset shape");
  }
}

// ---- fskgen ----

struct FskgenArgs {
  std::string scheme = "fsk8";
  int train = 2304;
  int val = 288;
  int test = 288;
  std::string snr_db = "10";
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
};

int run_fskgen(const FskgenArgs& a) {
  const int order = a.scheme == "fsk8" ? 8 : 32;
  const std::uint64_t seed = resolve_seed(a.seed, std::nullopt);
  const auto scheme = fsk::make_scheme(order, parse_snr(a.snr_db), seed);
  const fsk::SplitSizes sizes{a.train, a.val, a.test};
  const auto ds = fsk::generate_dataset(scheme, sizes, seed);
  fsk::save_dataset(ds, a.out);
  emit(json{{"command", "fskgen"},
            {"out", a.out},
            {"scheme", scheme_json(ds.scheme)},
            {"sizes", json{{"train", sizes.train}, {"val", sizes.val}, {"test", sizes.test}}},
            {"seed", seed},
            {"samples", sizes.total()}});
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  std::optional<std::uint64_t> config_seed;
  harness::TrainConfig cfg;
  if (!a.config.empty()) {
    const std::string text = slurp(a.config);
    cfg = harness::config_from_json(text);  // validates keys and types
    if (json::parse(text).contains("seed")) config_seed = cfg.seed;
  }
  cfg.seed = resolve_seed(a.seed, config_seed);
  cfg.dataset = a.data;
  cfg.validate();

  const auto ds = fsk::load_dataset(a.data);
  harness::TrainHooks hooks;
  hooks.on_epoch = [&](const harness::EpochLog& el) {
    std::string line = "epoch " + std::to_string(el.epoch) + "/" +
                       std::to_string(cfg.epochs) + " train_loss=" + fmt9(el.train_loss);
    if (cfg.psi_mode == psi::PsiMode::spectrum_preservative) {
      line += " pc_loss=" + fmt9(el.pc_loss);
    }
    if (el.has_val) line += " val_acc=" + fmt9(el.val_accuracy);
    std::cerr << line << "\n";
  };
  const auto out = harness::train(cfg, ds, &hooks);
  harness::write_run_dir(a.out, cfg, out);

  emit(json{{"command", "train"},
            {"run_dir", a.out},
            {"config", json::parse(harness::config_to_json(cfg))},
            {"metrics", json{{"accuracy", out.result.test_accuracy},
                             {"macro_auprc", out.result.test_macro_auprc},
                             {"final_train_loss", out.result.epoch_losses.back()},
                             {"wall_seconds", out.result.wall_seconds}}}});
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  int batch_size = 64;
  int jobs = 1;
};

int run_eval(const EvalArgs& a) {
  auto run = harness::load_model(a.ckpt);
  const auto ds = fsk::load_dataset(a.data);
  const auto ev = harness::evaluate(run.classifier, ds, a.split, a.batch_size);
  emit(json{{"command", "eval"},
            {"ckpt", a.ckpt},
            {"split", a.split},
            {"epoch", run.epoch},
            {"accuracy", ev.accuracy},
            {"macro_auprc", ev.macro_auprc},
            {"per_class_auprc", ev.per_class}});
  return 0;
}

// ---- augment ----

struct AugmentArgs {
  std::string data;
  int index = 0;
  std::string aug = "none";
  std::string aug_json;
  std::string psi = "none";
  std::optional<float> psi_const;
  std::string ckpt;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int run_augment(const AugmentArgs& a) {
  const auto ds = fsk::load_dataset(a.data);
  if (a.index < 0 || a.index >= ds.size()) {
    throw std::invalid_argument("augment: index " + std::to_string(a.index) +
                                " out of range [0, " + std::to_string(ds.size()) + ")");
  }

  aug::AugmentSpec spec;
  if (!a.aug_json.empty()) {
    spec = harness::augmentation_from_json(a.aug_json);
  } else {
    spec.kind = aug::kind_from_string(a.aug);
  }
  aug::validate(spec);
  const auto mode = psi::psi_mode_from_string(a.psi);

  std::optional<harness::LoadedRun> run;
  models::Demodulator* classifier = nullptr;
  models::MapGenerator* generator = nullptr;
  const bool needs_ckpt =
      !a.psi_const && (mode == psi::PsiMode::saliency ||
                       mode == psi::PsiMode::spectrum_preservative);
  if (needs_ckpt) {
    if (a.ckpt.empty()) {
      throw std::invalid_argument("augment: psi mode '" + a.psi + "' needs --ckpt");
    }
    run = harness::load_model(a.ckpt);
    check_model_shape(run->classifier.config(), ds.scheme, "augment");
    classifier = &run->classifier;
    if (mode == psi::PsiMode::spectrum_preservative) {
      if (!run->generator) {
        throw std::invalid_argument("augment: the checkpoint has no map generator");
      }
      generator = &*run->generator;
    }
  }

  const std::uint64_t seed = resolve_seed(a.seed, std::nullopt);
  harness::RngFabric fabric(seed);
  auto augment_rng = fabric.stream("augment");
  auto map_rng = fabric.stream("random_map");

  const auto x = ds.signal(a.index);
  const auto xf = dsp::rfft(x);

  // freq_mix needs a donor; draw one from the training split
  dsp::TimeSeries donor_ts;
  const dsp::TimeSeries* donor = nullptr;
  if (spec.kind == aug::Kind::freq_mix) {
    auto donor_rng = fabric.stream("donor");
    const auto [tb, te] = ds.split_range("train");
    donor_ts = ds.signal(static_cast<int>(donor_rng.uniform_int(tb, te - 1)));
    donor = &donor_ts;
  }

  psi::PreservationMap pmap;
  std::string map_tag;
  if (a.psi_const) {
    pmap = psi::constant_map(xf.bins(), *a.psi_const);  // validates [0,1]
    map_tag = "const";
  } else {
    pmap = harness::psi_map_for(mode, xf, classifier, generator, ds.label_row(a.index),
                                map_rng);
    map_tag = a.psi;
  }

  const auto x_aug = aug::apply(spec, x, augment_rng, donor);
  const auto preserved = dsp::irfft(psi::mix(xf, dsp::rfft(x_aug), pmap));

  const int C = x.channels, L = x.length;
  std::string csv = "t";
  for (int c = 0; c < C; ++c) {
    const std::string suffix = C == 1 ? "" : "_c" + std::to_string(c);
    csv += ",original" + suffix + ",augmented" + suffix + ",preserved" + suffix;
  }
  csv += "\n";
  for (int t = 0; t < L; ++t) {
    csv += std::to_string(t);
    for (int c = 0; c < C; ++c) {
      csv += ',';
      csv += fmt9(x.at(c, t));
      csv += ',';
      csv += fmt9(x_aug.at(c, t));
      csv += ',';
      csv += fmt9(preserved.at(c, t));
    }
    csv += "\n";
  }
  spit(a.out, csv);

  emit(json{{"command", "augment"},
            {"out", a.out},
            {"index", a.index},
            {"augmentation", json::parse(harness::augmentation_to_json(spec))},
            {"psi_mode", map_tag},
            {"seed", seed},
            {"channels", C},
            {"length", L}});
  return 0;
}

// ---- export-map ----

struct ExportArgs {
  std::string data;
  std::string split = "test";
  std::string psi;
  std::string ckpt;
  std::string out_csv;
  std::string out_json;
};

int run_export_map(const ExportArgs& a) {
  const auto ds = fsk::load_dataset(a.data);
  const auto mode = psi::psi_mode_from_string(a.psi);

  std::optional<harness::LoadedRun> run;
  models::Demodulator* classifier = nullptr;
  models::MapGenerator* generator = nullptr;
  if (!a.ckpt.empty()) {
    run = harness::load_model(a.ckpt);
    check_model_shape(run->classifier.config(), ds.scheme, "export");
    classifier = &run->classifier;
    if (run->generator) generator = &*run->generator;
  }

  harness::export_preservation_maps(mode, classifier, generator, ds, a.split, a.out_csv,
                                    a.out_json);
  const auto [sb, se] = ds.split_range(a.split);
  emit(json{{"command", "export-map"},
            {"csv", a.out_csv},
            {"json", a.out_json},
            {"split", a.split},
            {"psi_mode", a.psi},
            {"samples", se - sb}});
  return 0;
}

// ---- compare ----

struct CompareArgs {
  std::string run;
  std::string baseline;
};

int run_compare(const CompareArgs& a) {
  const float delta = harness::compare_runs(a.run, a.baseline);
  emit(json{{"command", "compare"},
            {"run", a.run},
            {"baseline", a.baseline},
            {"delta_accuracy", delta}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SimPSI: spectral-information-preserving time-series augmentation lab"};
  app.require_subcommand(1);

  FskgenArgs fg;
  auto* fskgen = app.add_subcommand("fskgen", "Generate a synthetic FSK dataset");
  fskgen->add_option("--scheme", fg.scheme, "Modulation scheme")
      ->check(CLI::IsMember({"fsk8", "fsk32"}))
      ->capture_default_str();
  fskgen->add_option("--train", fg.train, "Training samples")->capture_default_str();
  fskgen->add_option("--val", fg.val, "Validation samples")->capture_default_str();
  fskgen->add_option("--test", fg.test, "Test samples")->capture_default_str();
  fskgen->add_option("--snr-db", fg.snr_db, "Signal-to-noise ratio in dB, or 'inf'")
      ->capture_default_str();
  fskgen->add_option("--seed", fg.seed, "Master seed (default: SIMPSI_SEED or 0)");
  fskgen->add_option("--out", fg.out, "Output dataset directory")->required();
  fskgen->add_option("--jobs", fg.jobs, "Worker cap; results are identical for any value")
      ->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a demodulator, optionally with SimPSI");
  train->add_option("--config", tr.config, "Training config JSON (defaults when omitted)");
  train->add_option("--data", tr.data, "Dataset directory")->required();
  train->add_option("--out", tr.out, "Run directory to write")->required();
  train->add_option("--seed", tr.seed,
                    "Master seed (overrides config; default: SIMPSI_SEED or 0)");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  eval->add_option("--data", ev.data, "Dataset directory")->required();
  eval->add_option("--split", ev.split, "Dataset split")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  eval->add_option("--batch-size", ev.batch_size, "Eval batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval->add_option("--jobs", ev.jobs, "Worker cap; results are identical for any value")
      ->check(CLI::PositiveNumber);

  AugmentArgs au;
  auto* augment =
      app.add_subcommand("augment", "Write one sample's original/augmented/preserved series");
  augment->add_option("--data", au.data, "Dataset directory")->required();
  augment->add_option("--index", au.index, "Sample index")->capture_default_str();
  auto* aug_kind = augment->add_option("--aug", au.aug, "Augmentation kind, default parameters")
                       ->capture_default_str();
  augment->add_option("--aug-json", au.aug_json, "Full augmentation spec as inline JSON")
      ->excludes(aug_kind);
  auto* psi_mode = augment->add_option("--psi", au.psi, "Preservation map mode")
                       ->capture_default_str();
  augment->add_option("--psi-const", au.psi_const,
                      "Override: constant map of this value in [0,1] (inspection aid)")
      ->excludes(psi_mode);
  augment->add_option("--ckpt", au.ckpt, "Checkpoint (required for saliency and sp modes)");
  augment->add_option("--seed", au.seed, "Master seed (default: SIMPSI_SEED or 0)");
  augment->add_option("--out", au.out, "Output CSV path")->required();

  ExportArgs ex;
  auto* exportmap =
      app.add_subcommand("export-map", "Export per-sample preservation maps for a split");
  exportmap->add_option("--data", ex.data, "Dataset directory")->required();
  exportmap->add_option("--split", ex.split, "Dataset split")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  exportmap
      ->add_option("--psi", ex.psi,
                   "Map mode: magnitude, saliency, or spectrum_preservative")
      ->required();
  exportmap->add_option("--ckpt", ex.ckpt, "Checkpoint (required for saliency and sp modes)");
  exportmap->add_option("--out-csv", ex.out_csv, "Per-sample map CSV path")->required();
  exportmap->add_option("--out-json", ex.out_json, "Top-bins JSON sidecar path")->required();

  CompareArgs cp;
  auto* compare = app.add_subcommand("compare", "Accuracy delta between two run directories");
  compare->add_option("--run", cp.run, "Run directory")->required();
  compare->add_option("--baseline", cp.baseline, "Baseline run directory")->required();

  try {
    app.parse(argc, argv);
    if (*fskgen) return run_fskgen(fg);
    if (*train) return run_train(tr);
    if (*eval) return run_eval(ev);
    if (*augment) return run_augment(au);
    if (*exportmap) return run_export_map(ex);
    if (*compare) return run_compare(cp);
    return 2;  // unreachable: require_subcommand
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "simpsi: " << e.what() << "\n";
    return 2;
  } catch (const harness::NumericalError& e) {
    std::cerr << "simpsi: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "simpsi: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "simpsi: " << e.what() << "\n";
    return 3;
  }
}
