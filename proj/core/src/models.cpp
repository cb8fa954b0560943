#include "simpsi/models.hpp"

#include <stdexcept>
#include <string>

namespace simpsi::models {

void DemodulatorConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("demodulator: in_channels must be >= 1");
  if (num_symbols < 1) throw std::invalid_argument("demodulator: num_symbols must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("demodulator: num_classes must be >= 2");
  if (stem_channels < 1) throw std::invalid_argument("demodulator: stem_channels must be >= 1");
  if (num_blocks < 0) throw std::invalid_argument("demodulator: num_blocks must be >= 0");
  if (stem_kernel < 1 || stem_kernel % 2 == 0 || block_kernel < 1 || block_kernel % 2 == 0) {
    throw std::invalid_argument("demodulator: kernels must be odd and positive");
  }
  if (input_length % num_symbols != 0) {
    throw std::invalid_argument("demodulator: input_length must be divisible by num_symbols");
  }
  if (input_length / num_symbols != 4) {
    throw std::invalid_argument(
        "demodulator: two stride-2 stages downsample by 4, so input_length must be "
        "4 * num_symbols");
  }
}

Demodulator::Demodulator(const DemodulatorConfig& cfg, rng::RngStream& rng) : cfg_(cfg) {
  cfg.validate();
  const int ch = cfg.stem_channels;
  stem_ = nn::Conv1d(params_, "stem", cfg.in_channels, ch, cfg.stem_kernel, 1,
                     cfg.stem_kernel / 2, rng);
  stem_bn_ = nn::BatchNorm1d(params_, "stem_bn", ch);
  blocks_.reserve(static_cast<size_t>(cfg.num_blocks));
  for (int i = 0; i < cfg.num_blocks; ++i) {
    const std::string base = "block" + std::to_string(i);
    Block b;
    b.conv1 = nn::Conv1d(params_, base + ".conv1", ch, ch, cfg.block_kernel, 1,
                         cfg.block_kernel / 2, rng);
    b.bn1 = nn::BatchNorm1d(params_, base + ".bn1", ch);
    b.conv2 = nn::Conv1d(params_, base + ".conv2", ch, ch, cfg.block_kernel, 1,
                         cfg.block_kernel / 2, rng);
    b.bn2 = nn::BatchNorm1d(params_, base + ".bn2", ch);
    blocks_.push_back(std::move(b));
  }
  down1_ = nn::Conv1d(params_, "down1", ch, ch, cfg.block_kernel, 2, cfg.block_kernel / 2, rng);
  down_bn1_ = nn::BatchNorm1d(params_, "down1_bn", ch);
  down2_ = nn::Conv1d(params_, "down2", ch, ch, cfg.block_kernel, 2, cfg.block_kernel / 2, rng);
  down_bn2_ = nn::BatchNorm1d(params_, "down2_bn", ch);
  head_ = nn::Conv1d(params_, "head", ch, cfg.num_classes, 1, 1, 0, rng);
}

ad::Tensor Demodulator::forward(const ad::Tensor& x, bool training) {
  if (x.shape().size() != 3 || x.shape()[1] != cfg_.in_channels ||
      x.shape()[2] != cfg_.input_length) {
    throw std::invalid_argument("demodulator: expected input [N, " +
                                std::to_string(cfg_.in_channels) + ", " +
                                std::to_string(cfg_.input_length) + "], got " +
                                ad::shape_str(x.shape()));
  }
  ad::Tensor h = ad::relu(stem_bn_(stem_(x), training));
  for (auto& b : blocks_) {
    ad::Tensor r = ad::relu(b.bn1(b.conv1(h), training));
    r = ad::relu(b.bn2(b.conv2(r), training));
    h = ad::add(h, r);
  }
  h = ad::relu(down_bn1_(down1_(h), training));
  h = ad::relu(down_bn2_(down2_(h), training));
  h = head_(h);                      // [N, M, S]
  return ad::transpose(h, {0, 2, 1});  // [N, S, M]
}

ad::Tensor Demodulator::logits(const dsp::TimeSeries& x) {
  if (x.channels != cfg_.in_channels || x.length != cfg_.input_length) {
    throw std::invalid_argument("demodulator: sample shape does not match config");
  }
  ad::NoGradGuard ng;
  ad::Tensor batched({1, x.channels, x.length}, x.data);
  ad::Tensor out = forward(batched, false);
  return ad::reshape(out, {cfg_.num_symbols, cfg_.num_classes});
}

ad::Tensor demodulator_loss(const ad::Tensor& logits, const std::vector<int>& labels) {
  const auto& shape = logits.shape();
  if (shape.size() != 2 && shape.size() != 3) {
    throw std::invalid_argument("demodulator_loss: logits must be [S, M] or [N, S, M]");
  }
  const int m = shape.back();
  const int rows = logits.numel() / m;
  if (static_cast<int>(labels.size()) != rows) {
    throw std::invalid_argument("demodulator_loss: expected " + std::to_string(rows) +
                                " labels, got " + std::to_string(labels.size()));
  }
  return ad::softmax_cross_entropy(ad::reshape(logits, {rows, m}), labels);
}

void MapGeneratorConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("generator: in_channels must be >= 1");
  if (seq_len < 1) throw std::invalid_argument("generator: seq_len must be >= 1");
  if (d_model < 1 || heads < 1 || d_model % heads != 0) {
    throw std::invalid_argument("generator: d_model must be divisible by heads");
  }
  if (ffn_dim < 1) throw std::invalid_argument("generator: ffn_dim must be >= 1");
}

MapGenerator::MapGenerator(const MapGeneratorConfig& cfg, rng::RngStream& rng) : cfg_(cfg) {
  cfg.validate();
  proj_ = nn::Linear(params_, "proj", 2 * cfg.in_channels, cfg.d_model, rng);
  pos_emb_ = params_.add("pos_emb", ad::Tensor({cfg.seq_len, cfg.d_model}, 0.0f));
  for (int i = 0; i < 2; ++i) {
    const std::string base = "layer" + std::to_string(i);
    layers_[i].attn = nn::MultiHeadSelfAttention(params_, base + ".attn", cfg.d_model,
                                                 cfg.heads, rng);
    layers_[i].ln1 = nn::LayerNorm(params_, base + ".ln1", cfg.d_model);
    layers_[i].ffn1 = nn::Linear(params_, base + ".ffn1", cfg.d_model, cfg.ffn_dim, rng);
    layers_[i].ffn2 = nn::Linear(params_, base + ".ffn2", cfg.ffn_dim, cfg.d_model, rng);
    layers_[i].ln2 = nn::LayerNorm(params_, base + ".ln2", cfg.d_model);
  }
}

ad::Tensor MapGenerator::forward(const ad::Tensor& tokens) {
  if (tokens.shape().size() != 3 || tokens.shape()[1] != cfg_.seq_len ||
      tokens.shape()[2] != 2 * cfg_.in_channels) {
    throw std::invalid_argument("generator: expected tokens [N, " +
                                std::to_string(cfg_.seq_len) + ", " +
                                std::to_string(2 * cfg_.in_channels) + "], got " +
                                ad::shape_str(tokens.shape()));
  }
  ad::Tensor h = ad::add(proj_(tokens), pos_emb_);
  for (auto& layer : layers_) {
    h = layer.ln1(ad::add(h, layer.attn(h)));
    ad::Tensor f = layer.ffn2(ad::relu(layer.ffn1(h)));
    h = layer.ln2(ad::add(h, f));
  }
  return ad::sigmoid(ad::mean(h, {2}));  // parameter-free head
}

ad::Tensor generator_features(const std::vector<dsp::HalfSpectrum>& batch) {
  if (batch.empty()) throw std::invalid_argument("generator_features: empty batch");
  const int c = batch[0].channels;
  const int f = batch[0].bins();
  const int n = static_cast<int>(batch.size());
  const float scale = 1.0f / static_cast<float>(batch[0].origin_length);
  std::vector<float> vals(static_cast<size_t>(n) * f * 2 * c);
  for (int i = 0; i < n; ++i) {
    const auto& s = batch[static_cast<size_t>(i)];
    if (s.channels != c || s.bins() != f) {
      throw std::invalid_argument("generator_features: inconsistent spectrum shapes");
    }
    for (int k = 0; k < f; ++k) {
      float* token = vals.data() + (static_cast<size_t>(i) * f + k) * 2 * c;
      for (int ch = 0; ch < c; ++ch) {
        token[ch] = s.at(ch, k).real() * scale;
        token[c + ch] = s.at(ch, k).imag() * scale;
      }
    }
  }
  return ad::Tensor({n, f, 2 * c}, std::move(vals));
}

ad::Tensor generator_features(const dsp::HalfSpectrum& xf) {
  return generator_features(std::vector<dsp::HalfSpectrum>{xf});
}

psi::PreservationMap generator_map(MapGenerator& g, const dsp::HalfSpectrum& xf) {
  if (xf.channels != g.config().in_channels || xf.bins() != g.config().seq_len) {
    throw std::invalid_argument("generator_map: spectrum shape does not match generator");
  }
  ad::NoGradGuard ng;
  ad::Tensor out = g.forward(generator_features(xf));
  return psi::PreservationMap(out.values(), "generator");
}

psi::PreservationMap saliency_map(Demodulator& model, const dsp::HalfSpectrum& xf,
                                  const std::vector<int>& labels) {
  const auto& cfg = model.config();
  if (xf.channels != cfg.in_channels || xf.origin_length != cfg.input_length) {
    throw std::invalid_argument("saliency_map: spectrum shape does not match model");
  }
  if (static_cast<int>(labels.size()) != cfg.num_symbols) {
    throw std::invalid_argument("saliency_map: need one label per symbol position");
  }
  std::vector<float> onehot(static_cast<size_t>(cfg.num_symbols) * cfg.num_classes, 0.0f);
  for (int s = 0; s < cfg.num_symbols; ++s) {
    const int y = labels[static_cast<size_t>(s)];
    if (y < 0 || y >= cfg.num_classes) {
      throw std::invalid_argument("saliency_map: label " + std::to_string(y) +
                                  " out of range [0, " + std::to_string(cfg.num_classes) + ")");
    }
    onehot[static_cast<size_t>(s) * cfg.num_classes + y] = 1.0f;
  }
  ad::Tensor mask({1, cfg.num_symbols, cfg.num_classes}, std::move(onehot));

  nn::FreezeGuard freeze(model.params());
  auto logit_fn = [&](const ad::Tensor& xt) {
    ad::Tensor batched = ad::reshape(xt, {1, cfg.in_channels, cfg.input_length});
    ad::Tensor lg = model.forward(batched, false);
    // sum of the labeled logits across symbol positions
    const float count = static_cast<float>(lg.numel());
    return ad::mul_scalar(ad::mean(ad::mul(lg, mask)), count);
  };
  return psi::saliency_map(logit_fn, xf);
}

}  // namespace simpsi::models
