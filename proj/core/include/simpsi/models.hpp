#pragma once

#include <vector>

#include "simpsi/dsp.hpp"
#include "simpsi/nn.hpp"
#include "simpsi/psi.hpp"
#include "simpsi/rng.hpp"
#include "simpsi/tensor.hpp"

namespace simpsi::models {

struct DemodulatorConfig {
  int in_channels = 1;
  int input_length = 128;
  int num_symbols = 32;
  int num_classes = 32;
  int stem_channels = 32;
  int num_blocks = 3;
  int stem_kernel = 7;
  int block_kernel = 3;

  void validate() const;  // throws std::invalid_argument
};

// ResNet-style per-symbol classifier: stem conv/BN/ReLU, residual blocks,
// two stride-2 downsampling convs (so input_length must be 4x num_symbols),
// and a 1x1 conv head emitting num_classes logits per symbol position.
class Demodulator {
 public:
  Demodulator(const DemodulatorConfig& cfg, rng::RngStream& rng);

  // x [N, C, L] -> logits [N, S, M]. training toggles batchnorm mode.
  ad::Tensor forward(const ad::Tensor& x, bool training);

  // Single-sample eval-mode convenience: [C, L] -> [S, M].
  ad::Tensor logits(const dsp::TimeSeries& x);

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  const DemodulatorConfig& config() const { return cfg_; }

 private:
  struct Block {
    nn::Conv1d conv1, conv2;
    nn::BatchNorm1d bn1, bn2;
  };

  DemodulatorConfig cfg_;
  nn::ParameterSet params_;
  nn::Conv1d stem_;
  nn::BatchNorm1d stem_bn_;
  std::vector<Block> blocks_;
  nn::Conv1d down1_, down2_;
  nn::BatchNorm1d down_bn1_, down_bn2_;
  nn::Conv1d head_;
};

// Mean cross-entropy over all symbol positions. logits [S, M] or [N, S, M];
// labels flattened to match, each in [0, num_classes).
ad::Tensor demodulator_loss(const ad::Tensor& logits, const std::vector<int>& labels);

struct MapGeneratorConfig {
  int in_channels = 1;  // spectrum channels C; tokens carry 2C features
  int seq_len = 65;     // frequency bins F
  int d_model = 64;
  int heads = 4;
  int ffn_dim = 128;
  // encoder depth is fixed at 2

  void validate() const;
};

// Two-layer post-LN transformer encoder over frequency tokens. The head is
// parameter-free: mean over the feature dimension, then sigmoid. Post-LN
// zero-centers token features, so a fresh generator emits the neutral 0.5
// map everywhere.
class MapGenerator {
 public:
  MapGenerator(const MapGeneratorConfig& cfg, rng::RngStream& rng);

  // tokens [N, F, 2C] -> map [N, F], values strictly in (0, 1).
  ad::Tensor forward(const ad::Tensor& tokens);

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  const MapGeneratorConfig& config() const { return cfg_; }

 private:
  struct Layer {
    nn::MultiHeadSelfAttention attn;
    nn::LayerNorm ln1, ln2;
    nn::Linear ffn1, ffn2;
  };

  MapGeneratorConfig cfg_;
  nn::ParameterSet params_;
  nn::Linear proj_;
  ad::Tensor pos_emb_;
  Layer layers_[2];
};

// Token features for the generator: per frequency bin, the real parts of all
// channels then the imaginary parts, scaled by 1/origin_length.
ad::Tensor generator_features(const std::vector<dsp::HalfSpectrum>& batch);
ad::Tensor generator_features(const dsp::HalfSpectrum& xf);

// Map-mode entry points used by the training harness.
psi::PreservationMap generator_map(MapGenerator& g, const dsp::HalfSpectrum& xf);
// Saliency of the summed label logits; runs eval-mode with parameters frozen.
psi::PreservationMap saliency_map(Demodulator& model, const dsp::HalfSpectrum& xf,
                                  const std::vector<int>& labels);

}  // namespace simpsi::models
