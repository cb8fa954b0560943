#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "simpsi/augment.hpp"
#include "simpsi/fsk.hpp"
#include "simpsi/models.hpp"
#include "simpsi/psi.hpp"
#include "simpsi/rng.hpp"

namespace simpsi::harness {

struct TrainConfig {
  std::string dataset;  // dataset directory, echoed into run artifacts
  aug::AugmentSpec augmentation;
  psi::PsiMode psi_mode = psi::PsiMode::none;
  float lr = 1e-3f;
  int epochs = 50;
  int batch_size = 64;
  float beta1 = 0.1f;
  float beta2 = 0.5f;
  std::uint64_t seed = 0;
  std::optional<float> generator_lr;  // unset: follows lr
  int eval_cadence = 1;               // validation eval every this many epochs

  float resolved_generator_lr() const { return generator_lr ? *generator_lr : lr; }
  void validate() const;  // throws std::invalid_argument
};

// JSON round-trip for config files and run-directory echoes. Parsing fills
// defaults for absent keys, resolves generator_lr, and rejects unknown keys;
// serialization always writes every key.
std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

// Same object shape as the config's "augmentation" block, round-tripped on
// its own (the augment command takes one inline).
std::string augmentation_to_json(const aug::AugmentSpec& spec);
aug::AugmentSpec augmentation_from_json(const std::string& text);

// Named deterministic streams off one master seed: stream(name) =
// RngStream(master).fork(fnv1a64(name)), so distinct names give independent
// streams and the same master always rebuilds them. Training uses "init",
// "augment", "random_map", and "shuffle"; "data" is reserved for dataset
// generation (the fsk module derives it the same way from its own seed).
class RngFabric {
 public:
  explicit RngFabric(std::uint64_t master) : master_(master) {}

  rng::RngStream stream(std::string_view name) const;
  std::uint64_t master() const { return master_; }

 private:
  std::uint64_t master_;
};

// Map dispatch for one sample. `rng` is consulted only by PsiMode::random;
// saliency needs `classifier`, spectrum_preservative needs `generator`
// (missing component is an error). PsiMode::none yields the all-zero map,
// i.e. the mixed signal is exactly the plain augmented view.
psi::PreservationMap psi_map_for(psi::PsiMode mode, const dsp::HalfSpectrum& xf,
                                 models::Demodulator* classifier,
                                 models::MapGenerator* generator,
                                 const std::vector<int>& labels, rng::RngStream& rng);

// Average precision over descending score thresholds, ties grouped at one
// threshold: sum of (R_i - R_{i-1}) * P_i. Labels are 0/1; at least one
// positive is required.
float auprc(const std::vector<float>& scores, const std::vector<int>& labels);

struct EvalResult {
  float accuracy = 0.0f;     // per-symbol, over N*S predictions
  float macro_auprc = 0.0f;  // mean of per_class
  std::vector<float> per_class;
};

// Clean eval-mode forward over a split; no augmentation, no generator, no
// parameter or batchnorm-stat writes. Per-class AUPRC is one-vs-rest on
// softmax scores; a class absent from the split makes auprc throw.
EvalResult evaluate(models::Demodulator& model, const fsk::FskDataset& dataset,
                    const std::string& split, int batch_size = 64);

struct EpochLog {
  int epoch = 0;        // 1-based
  float train_loss = 0.0f;  // mean classifier loss over batches
  float pc_loss = 0.0f;     // mean contrastive loss (spectrum_preservative only)
  float val_accuracy = 0.0f;
  bool has_val = false;
};

struct RunResult {
  std::vector<float> epoch_losses;
  float test_accuracy = 0.0f;
  float test_macro_auprc = 0.0f;
  std::vector<float> per_class_auprc;
  double wall_seconds = 0.0;
};

enum class StepKind { classifier, generator };

// Instrumentation: on_ready fires after model construction, after_step after
// every optimizer step, on_epoch after each epoch's log entry is complete.
// The generator pointer is null unless the run is spectrum_preservative.
struct TrainHooks {
  std::function<void(models::Demodulator&, models::MapGenerator*)> on_ready;
  std::function<void(StepKind, int epoch, int batch, models::Demodulator&,
                     models::MapGenerator*)>
      after_step;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainOutput {
  models::Demodulator classifier;
  std::optional<models::MapGenerator> generator;
  RunResult result;
  std::vector<EpochLog> log;
};

// A training step hit NaN/Inf; the message carries the step kind, epoch,
// batch, and the originating check.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Alternating per-batch training. Classifier step: per-sample preservation
// maps are data, the mixed batch trains the classifier under cross-entropy.
// Generator step (spectrum_preservative only): classifier frozen and in eval
// mode, fresh augmentation draws for the random/positive/negative views,
// contrastive loss steps the generator alone. Identical config + dataset +
// seed reproduce identical losses and metrics. Non-finite values in a step
// abort with a NumericalError naming the step, epoch, and batch.
TrainOutput train(const TrainConfig& config, const fsk::FskDataset& dataset,
                  const TrainHooks* hooks = nullptr);

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// wrong magic, unsupported version, or unparseable header
struct CheckpointFormatError : CheckpointError {
  using CheckpointError::CheckpointError;
};
// registry/model mismatch; the message names the offending parameter
struct CheckpointShapeError : CheckpointError {
  using CheckpointError::CheckpointError;
};
// file shorter than the registry implies
struct CheckpointTruncatedError : CheckpointError {
  using CheckpointError::CheckpointError;
};

// File layout: magic "SIMPSI01", little-endian u32 JSON header length, the
// header (config, model configs, epoch, seed, tensor registry with byte
// offsets), then every tensor as little-endian f32 in registration order,
// classifier first. Buffers (batchnorm stats) are included, so eval-mode
// outputs round-trip bit-exactly.
struct Checkpoint {
  struct Blob {
    std::string name;
    ad::Shape shape;
    std::vector<float> data;
  };

  TrainConfig config;
  models::DemodulatorConfig classifier_config;
  std::optional<models::MapGeneratorConfig> generator_config;
  int epoch = 0;
  std::vector<Blob> classifier_blobs;
  std::vector<Blob> generator_blobs;
};

// `generator` must be present exactly when config.psi_mode is
// spectrum_preservative.
void save_checkpoint(const std::string& path, const TrainConfig& config,
                     const models::Demodulator& model,
                     const models::MapGenerator* generator, int epoch);
Checkpoint load_checkpoint(const std::string& path);

// Copies blobs into the set's tensors, matching name and shape in
// registration order; any mismatch throws CheckpointShapeError.
void restore_parameters(nn::ParameterSet& params,
                        const std::vector<Checkpoint::Blob>& blobs);

struct LoadedRun {
  TrainConfig config;
  int epoch = 0;
  models::Demodulator classifier;
  std::optional<models::MapGenerator> generator;
};

// Rebuilds the models from the header configs and restores every tensor.
LoadedRun load_model(const std::string& path);

// One map per sample of the split (modes: magnitude, saliency,
// spectrum_preservative), written as CSV with a leading `sample` column and
// a final MEAN row, plus a JSON sidecar listing the mean map's ten largest
// bins (descending value, lower bin first on ties).
void export_preservation_maps(psi::PsiMode mode, models::Demodulator* classifier,
                              models::MapGenerator* generator,
                              const fsk::FskDataset& dataset, const std::string& split,
                              const std::string& csv_path, const std::string& json_path);

// Writes config.json, metrics.json, train_log.csv, and checkpoint.simpsi
// into `dir` (created if needed).
void write_run_dir(const std::string& dir, const TrainConfig& config,
                   const TrainOutput& out);

// Accuracy difference run - baseline, read from <dir>/metrics.json; the two
// runs must record the same dataset.
float compare_runs(const std::string& run_dir, const std::string& baseline_dir);

}  // namespace simpsi::harness
