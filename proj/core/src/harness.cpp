#include "simpsi/harness.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint files are little-endian");

namespace simpsi::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'I', 'M', 'P', 'S', 'I', '0', '1'};

// config parsing: absent keys keep defaults, bad types name the key
float want_float(const json& v, const std::string& key) {
  if (!v.is_number()) throw std::invalid_argument("config: key '" + key + "' must be a number");
  return v.get<float>();
}

int want_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) {
    throw std::invalid_argument("config: key '" + key + "' must be an integer");
  }
  return v.get<int>();
}

bool want_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw std::invalid_argument("config: key '" + key + "' must be a boolean");
  return v.get<bool>();
}

std::string want_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw std::invalid_argument("config: key '" + key + "' must be a string");
  return v.get<std::string>();
}

std::uint64_t want_u64(const json& v, const std::string& key) {
  if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0))) {
    throw std::invalid_argument("config: key '" + key + "' must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

json aug_to_json(const aug::AugmentSpec& s) {
  return json{
      {"kind", aug::kind_to_string(s.kind)},
      {"jitter_sigma", s.jitter_sigma},
      {"jitter_relative", s.jitter_relative},
      {"scale_sigma", s.scale_sigma},
      {"shift_sigma", s.shift_sigma},
      {"warp_knots", s.warp_knots},
      {"warp_sigma", s.warp_sigma},
      {"max_segments", s.max_segments},
      {"dropout_p", s.dropout_p},
      {"mask_ratio", s.mask_ratio},
      {"mix_ratio", s.mix_ratio},
      {"add_ratio", s.add_ratio},
      {"add_alpha", s.add_alpha},
  };
}

aug::AugmentSpec aug_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: key 'augmentation' must be an object");
  aug::AugmentSpec s;
  for (const auto& [key, v] : j.items()) {
    if (key == "kind") {
      s.kind = aug::kind_from_string(want_string(v, key));
    } else if (key == "jitter_sigma") {
      s.jitter_sigma = want_float(v, key);
    } else if (key == "jitter_relative") {
      s.jitter_relative = want_bool(v, key);
    } else if (key == "scale_sigma") {
      s.scale_sigma = want_float(v, key);
    } else if (key == "shift_sigma") {
      s.shift_sigma = want_float(v, key);
    } else if (key == "warp_knots") {
      s.warp_knots = want_int(v, key);
    } else if (key == "warp_sigma") {
      s.warp_sigma = want_float(v, key);
    } else if (key == "max_segments") {
      s.max_segments = want_int(v, key);
    } else if (key == "dropout_p") {
      s.dropout_p = want_float(v, key);
    } else if (key == "mask_ratio") {
      s.mask_ratio = want_float(v, key);
    } else if (key == "mix_ratio") {
      s.mix_ratio = want_float(v, key);
    } else if (key == "add_ratio") {
      s.add_ratio = want_float(v, key);
    } else if (key == "add_alpha") {
      s.add_alpha = want_float(v, key);
    } else {
      throw std::invalid_argument("config: unknown augmentation key '" + key + "'");
    }
  }
  return s;
}

json config_to_json_obj(const TrainConfig& c) {
  return json{
      {"dataset", c.dataset},
      {"augmentation", aug_to_json(c.augmentation)},
      {"psi_mode", psi::psi_mode_to_string(c.psi_mode)},
      {"lr", c.lr},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"seed", c.seed},
      {"generator_lr", c.resolved_generator_lr()},
      {"eval_cadence", c.eval_cadence},
  };
}

TrainConfig config_from_json_obj(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "dataset") {
      c.dataset = want_string(v, key);
    } else if (key == "augmentation") {
      c.augmentation = aug_from_json(v);
    } else if (key == "psi_mode") {
      c.psi_mode = psi::psi_mode_from_string(want_string(v, key));
    } else if (key == "lr") {
      c.lr = want_float(v, key);
    } else if (key == "epochs") {
      c.epochs = want_int(v, key);
    } else if (key == "batch_size") {
      c.batch_size = want_int(v, key);
    } else if (key == "beta1") {
      c.beta1 = want_float(v, key);
    } else if (key == "beta2") {
      c.beta2 = want_float(v, key);
    } else if (key == "seed") {
      c.seed = want_u64(v, key);
    } else if (key == "generator_lr") {
      c.generator_lr = want_float(v, key);
    } else if (key == "eval_cadence") {
      c.eval_cadence = want_int(v, key);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  return c;
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string step_diag(const char* which, int epoch, int batch) {
  return std::string("train: numerical abort in ") + which + " step at epoch " +
         std::to_string(epoch) + ", batch " + std::to_string(batch);
}

}  // namespace

void TrainConfig::validate() const {
  if (!std::isfinite(beta1) || !std::isfinite(beta2) || !(beta1 < beta2)) {
    throw std::invalid_argument("train config: beta1 < beta2 required");
  }
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(lr > 0.0f) || !std::isfinite(lr)) {
    throw std::invalid_argument("train config: lr must be positive");
  }
  if (generator_lr && (!(*generator_lr > 0.0f) || !std::isfinite(*generator_lr))) {
    throw std::invalid_argument("train config: generator_lr must be positive");
  }
  if (eval_cadence < 1) throw std::invalid_argument("train config: eval_cadence must be >= 1");
  aug::validate(augmentation);
}

std::string config_to_json(const TrainConfig& config) {
  return config_to_json_obj(config).dump(2) + "\n";
}

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  return config_from_json_obj(j);
}

std::string augmentation_to_json(const aug::AugmentSpec& spec) {
  return aug_to_json(spec).dump();
}

aug::AugmentSpec augmentation_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  return aug_from_json(j);
}

rng::RngStream RngFabric::stream(std::string_view name) const {
  return rng::RngStream(master_).fork(rng::fnv1a64(name));
}

psi::PreservationMap psi_map_for(psi::PsiMode mode, const dsp::HalfSpectrum& xf,
                                 models::Demodulator* classifier,
                                 models::MapGenerator* generator,
                                 const std::vector<int>& labels, rng::RngStream& rng) {
  switch (mode) {
    case psi::PsiMode::none:
      return psi::constant_map(xf.bins(), 0.0f);
    case psi::PsiMode::random:
      return psi::random_map(rng, xf.bins());
    case psi::PsiMode::magnitude:
      return psi::magnitude_map(xf);
    case psi::PsiMode::saliency:
      if (!classifier) throw std::invalid_argument("psi mode 'saliency' needs a classifier");
      return models::saliency_map(*classifier, xf, labels);
    case psi::PsiMode::spectrum_preservative:
      if (!generator) {
        throw std::invalid_argument("psi mode 'spectrum_preservative' needs a map generator");
      }
      return models::generator_map(*generator, xf);
  }
  throw std::invalid_argument("psi_map_for: unknown mode");
}

float auprc(const std::vector<float>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auprc: scores and labels differ in length");
  }
  if (scores.empty()) throw std::invalid_argument("auprc: empty input");
  long positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("auprc: labels must be 0 or 1");
    }
    if (!std::isfinite(scores[i])) throw std::invalid_argument("auprc: non-finite score");
    positives += labels[i];
  }
  if (positives == 0) throw std::invalid_argument("auprc: needs at least one positive");

  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)]) {
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    }
    return a < b;
  });

  // Tied scores form one threshold, so label order within a tie is irrelevant.
  double ap = 0.0, tp = 0.0, fp = 0.0, recall_prev = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    const float threshold = scores[static_cast<std::size_t>(idx[i])];
    std::size_t j = i;
    while (j < idx.size() && scores[static_cast<std::size_t>(idx[j])] == threshold) {
      if (labels[static_cast<std::size_t>(idx[j])] == 1) {
        tp += 1.0;
      } else {
        fp += 1.0;
      }
      ++j;
    }
    const double recall = tp / static_cast<double>(positives);
    const double precision = tp / (tp + fp);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
    i = j;
  }
  return static_cast<float>(ap);
}

EvalResult evaluate(models::Demodulator& model, const fsk::FskDataset& dataset,
                    const std::string& split, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
  const auto [begin, end] = dataset.split_range(split);
  const int n = end - begin;
  if (n <= 0) throw std::invalid_argument("evaluate: empty split '" + split + "'");

  const auto& sc = dataset.scheme;
  const auto& mc = model.config();
  if (mc.in_channels != 1 || mc.input_length != sc.length ||
      mc.num_symbols != sc.num_symbols || mc.num_classes != sc.order) {
    throw std::invalid_argument("evaluate: model was built for a different dataset shape");
  }
  const int s = sc.num_symbols, m = sc.order, l = sc.length;

  std::vector<std::vector<float>> scores(static_cast<std::size_t>(m));
  for (auto& v : scores) v.reserve(static_cast<std::size_t>(n) * s);
  std::vector<int> truth;
  truth.reserve(static_cast<std::size_t>(n) * s);
  long correct = 0;

  ad::NoGradGuard ng;
  for (int b0 = 0; b0 < n; b0 += batch_size) {
    const int bs = std::min(batch_size, n - b0);
    ad::Tensor x({bs, 1, l});
    auto& xv = x.values();
    for (int k = 0; k < bs; ++k) {
      const auto sig = dataset.signal(begin + b0 + k);
      std::copy(sig.data.begin(), sig.data.end(), xv.begin() + static_cast<std::size_t>(k) * l);
    }
    const auto logits = model.forward(x, false);
    const auto& lv = logits.values();
    for (int k = 0; k < bs; ++k) {
      const auto labels = dataset.label_row(begin + b0 + k);
      for (int t = 0; t < s; ++t) {
        const float* row = lv.data() + (static_cast<std::size_t>(k) * s + t) * m;
        int best = 0;
        double mx = row[0];
        for (int j = 1; j < m; ++j) {
          if (row[j] > mx) {
            mx = row[j];
            best = j;
          }
        }
        double denom = 0.0;
        for (int j = 0; j < m; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
        for (int j = 0; j < m; ++j) {
          scores[static_cast<std::size_t>(j)].push_back(
              static_cast<float>(std::exp(static_cast<double>(row[j]) - mx) / denom));
        }
        truth.push_back(labels[static_cast<std::size_t>(t)]);
        if (best == labels[static_cast<std::size_t>(t)]) ++correct;
      }
    }
  }

  EvalResult res;
  res.accuracy = static_cast<float>(static_cast<double>(correct) /
                                    (static_cast<double>(n) * s));
  double macro = 0.0;
  std::vector<int> onevsrest(truth.size());
  for (int j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < truth.size(); ++i) onevsrest[i] = truth[i] == j ? 1 : 0;
    res.per_class.push_back(auprc(scores[static_cast<std::size_t>(j)], onevsrest));
    macro += res.per_class.back();
  }
  res.macro_auprc = static_cast<float>(macro / m);
  return res;
}

TrainOutput train(const TrainConfig& config, const fsk::FskDataset& dataset,
                  const TrainHooks* hooks) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto& sc = dataset.scheme;
  const bool sp = config.psi_mode == psi::PsiMode::spectrum_preservative;

  models::DemodulatorConfig dcfg;
  dcfg.in_channels = 1;
  dcfg.input_length = sc.length;
  dcfg.num_symbols = sc.num_symbols;
  dcfg.num_classes = sc.order;
  dcfg.validate();

  RngFabric fabric(config.seed);
  auto init_rng = fabric.stream("init");
  models::Demodulator model(dcfg, init_rng);
  std::optional<models::MapGenerator> gen;
  if (sp) {
    models::MapGeneratorConfig gcfg;
    gcfg.in_channels = 1;
    gcfg.seq_len = dsp::half_bins(sc.length);
    gcfg.validate();
    gen.emplace(gcfg, init_rng);
  }
  models::MapGenerator* genp = gen ? &*gen : nullptr;

  auto augment_rng = fabric.stream("augment");
  auto map_rng = fabric.stream("random_map");
  auto shuffle_rng = fabric.stream("shuffle");

  nn::Adam opt_p(model.params(), nn::AdamOptions{.lr = config.lr});
  std::optional<nn::Adam> opt_g;
  if (sp) opt_g.emplace(gen->params(), nn::AdamOptions{.lr = config.resolved_generator_lr()});

  const auto [tb, te] = dataset.split_range("train");
  const int ntrain = te - tb;
  if (ntrain < 1) throw std::invalid_argument("train: empty train split");

  std::vector<dsp::TimeSeries> xs;
  std::vector<dsp::HalfSpectrum> xfs;
  std::vector<std::vector<int>> ys;
  xs.reserve(static_cast<std::size_t>(ntrain));
  xfs.reserve(static_cast<std::size_t>(ntrain));
  ys.reserve(static_cast<std::size_t>(ntrain));
  for (int i = tb; i < te; ++i) {
    xs.push_back(dataset.signal(i));
    xfs.push_back(dsp::rfft(xs.back()));
    ys.push_back(dataset.label_row(i));
  }
  const int L = sc.length;
  const int F = dsp::half_bins(L);
  const bool needs_donor = config.augmentation.kind == aug::Kind::freq_mix;
  auto pick_donor = [&]() -> const dsp::TimeSeries* {
    if (!needs_donor) return nullptr;
    return &xs[static_cast<std::size_t>(augment_rng.uniform_int(0, ntrain - 1))];
  };

  if (hooks && hooks->on_ready) hooks->on_ready(model, genp);

  auto classifier_step = [&](const std::vector<int>& batch,
                             const std::vector<int>& labels) -> float {
    const int bs = static_cast<int>(batch.size());
    std::vector<psi::PreservationMap> maps;
    maps.reserve(static_cast<std::size_t>(bs));
    if (sp) {
      // One batched generator forward; the maps are data for this step.
      ad::NoGradGuard ng;
      std::vector<dsp::HalfSpectrum> bxf;
      bxf.reserve(static_cast<std::size_t>(bs));
      for (int idx : batch) bxf.push_back(xfs[static_cast<std::size_t>(idx)]);
      const auto pm = gen->forward(models::generator_features(bxf));
      const auto& v = pm.values();
      for (int k = 0; k < bs; ++k) {
        maps.emplace_back(std::vector<float>(v.begin() + static_cast<std::size_t>(k) * F,
                                             v.begin() + static_cast<std::size_t>(k + 1) * F),
                          "generator");
      }
    } else {
      for (int idx : batch) {
        maps.push_back(psi_map_for(config.psi_mode, xfs[static_cast<std::size_t>(idx)], &model,
                                   genp, ys[static_cast<std::size_t>(idx)], map_rng));
      }
    }

    ad::Tensor x({bs, 1, L});
    auto& xv = x.values();
    for (int k = 0; k < bs; ++k) {
      const auto idx = static_cast<std::size_t>(batch[static_cast<std::size_t>(k)]);
      const dsp::TimeSeries* donor = pick_donor();
      const auto mixed = psi::augment_and_preserve(xs[idx], xfs[idx],
                                                   maps[static_cast<std::size_t>(k)],
                                                   config.augmentation, augment_rng, donor);
      std::copy(mixed.data.begin(), mixed.data.end(),
                xv.begin() + static_cast<std::size_t>(k) * L);
    }
    auto loss = models::demodulator_loss(model.forward(x, true), labels);
    const float lv = loss.item();
    if (!std::isfinite(lv)) throw std::runtime_error("non-finite classifier loss");
    ad::backward(loss);
    opt_p.step();
    return lv;
  };

  auto generator_step = [&](const std::vector<int>& batch,
                            const std::vector<int>& labels) -> float {
    const int bs = static_cast<int>(batch.size());
    nn::FreezeGuard freeze(model.params());

    // The random-map reference loss is a constant for the generator.
    float lrnd;
    {
      ad::NoGradGuard ng;
      ad::Tensor xr({bs, 1, L});
      auto& xv = xr.values();
      for (int k = 0; k < bs; ++k) {
        const auto idx = static_cast<std::size_t>(batch[static_cast<std::size_t>(k)]);
        const auto p = psi::random_map(map_rng, F);
        const dsp::TimeSeries* donor = pick_donor();
        const auto view = psi::augment_and_preserve(xs[idx], xfs[idx], p, config.augmentation,
                                                    augment_rng, donor);
        std::copy(view.data.begin(), view.data.end(),
                  xv.begin() + static_cast<std::size_t>(k) * L);
      }
      lrnd = models::demodulator_loss(model.forward(xr, false), labels).item();
    }
    if (!std::isfinite(lrnd)) throw std::runtime_error("non-finite random-map reference loss");

    std::vector<dsp::HalfSpectrum> orig, pos_aug, neg_aug;
    orig.reserve(static_cast<std::size_t>(bs));
    pos_aug.reserve(static_cast<std::size_t>(bs));
    neg_aug.reserve(static_cast<std::size_t>(bs));
    for (int k = 0; k < bs; ++k) {
      const auto idx = static_cast<std::size_t>(batch[static_cast<std::size_t>(k)]);
      orig.push_back(xfs[idx]);
      auto fresh_view = [&]() {
        const dsp::TimeSeries* donor = pick_donor();
        return dsp::rfft(aug::apply(config.augmentation, xs[idx], augment_rng, donor));
      };
      pos_aug.push_back(fresh_view());
      neg_aug.push_back(fresh_view());
    }

    auto pmap = gen->forward(models::generator_features(orig));
    auto pos = psi::mix_irfft_op(pmap, orig, pos_aug);
    auto neg = psi::mix_irfft_op(ad::add_scalar(ad::mul_scalar(pmap, -1.0f), 1.0f), orig,
                                 neg_aug);
    // Classifier stays in eval mode: frozen parameters and frozen BN stats.
    auto lpos = models::demodulator_loss(model.forward(pos, false), labels);
    auto lneg = models::demodulator_loss(model.forward(neg, false), labels);
    auto lpc = psi::preservation_contrastive_loss(lpos, ad::Tensor::scalar(lrnd), lneg,
                                                  config.beta1, config.beta2);
    const float lv = lpc.item();
    if (!std::isfinite(lv)) throw std::runtime_error("non-finite contrastive loss");
    ad::backward(lpc);
    opt_g->step();
    return lv;
  };

  std::vector<EpochLog> log;
  std::vector<float> epoch_losses;
  std::vector<int> order(static_cast<std::size_t>(ntrain));
  std::iota(order.begin(), order.end(), 0);
  const auto [vb, ve] = dataset.split_range("val");

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int i = ntrain - 1; i > 0; --i) {
      const int j = shuffle_rng.uniform_int(0, i);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    double cl_sum = 0.0, pc_sum = 0.0;
    int nb = 0;
    for (int b0 = 0; b0 < ntrain; b0 += config.batch_size, ++nb) {
      const int bs = std::min(config.batch_size, ntrain - b0);
      const std::vector<int> batch(order.begin() + b0, order.begin() + b0 + bs);
      std::vector<int> labels;
      labels.reserve(static_cast<std::size_t>(bs) * sc.num_symbols);
      for (int idx : batch) {
        const auto& y = ys[static_cast<std::size_t>(idx)];
        labels.insert(labels.end(), y.begin(), y.end());
      }
      // Re-tag any numerical throw (op-level finiteness checks included)
      // with the step, epoch, and batch it happened in.
      try {
        cl_sum += classifier_step(batch, labels);
      } catch (const std::runtime_error& e) {
        throw NumericalError(step_diag("classifier", epoch, nb) + ": " + e.what());
      }
      if (hooks && hooks->after_step) {
        hooks->after_step(StepKind::classifier, epoch, nb, model, genp);
      }
      if (sp) {
        try {
          pc_sum += generator_step(batch, labels);
        } catch (const std::runtime_error& e) {
          throw NumericalError(step_diag("generator", epoch, nb) + ": " + e.what());
        }
        if (hooks && hooks->after_step) {
          hooks->after_step(StepKind::generator, epoch, nb, model, genp);
        }
      }
    }
    EpochLog el;
    el.epoch = epoch;
    el.train_loss = static_cast<float>(cl_sum / nb);
    el.pc_loss = sp ? static_cast<float>(pc_sum / nb) : 0.0f;
    if (epoch % config.eval_cadence == 0 && ve > vb) {
      el.val_accuracy = evaluate(model, dataset, "val", config.batch_size).accuracy;
      el.has_val = true;
    }
    epoch_losses.push_back(el.train_loss);
    log.push_back(el);
    if (hooks && hooks->on_epoch) hooks->on_epoch(el);
  }

  RunResult result;
  result.epoch_losses = std::move(epoch_losses);
  const auto [eb, ee] = dataset.split_range("test");
  if (ee > eb) {
    const auto ev = evaluate(model, dataset, "test", config.batch_size);
    result.test_accuracy = ev.accuracy;
    result.test_macro_auprc = ev.macro_auprc;
    result.per_class_auprc = ev.per_class;
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  return TrainOutput{std::move(model), std::move(gen), std::move(result), std::move(log)};
}

namespace {

json demod_config_to_json(const models::DemodulatorConfig& c) {
  return json{{"in_channels", c.in_channels},     {"input_length", c.input_length},
              {"num_symbols", c.num_symbols},     {"num_classes", c.num_classes},
              {"stem_channels", c.stem_channels}, {"num_blocks", c.num_blocks},
              {"stem_kernel", c.stem_kernel},     {"block_kernel", c.block_kernel}};
}

json gen_config_to_json(const models::MapGeneratorConfig& c) {
  return json{{"in_channels", c.in_channels},
              {"seq_len", c.seq_len},
              {"d_model", c.d_model},
              {"heads", c.heads},
              {"ffn_dim", c.ffn_dim}};
}

const json& ck_field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) {
    throw CheckpointFormatError(std::string("checkpoint: header missing field '") + key + "'");
  }
  return *it;
}

int ck_int(const json& j, const char* key) {
  const json& v = ck_field(j, key);
  if (!v.is_number_integer()) {
    throw CheckpointFormatError(std::string("checkpoint: field '") + key +
                                "' must be an integer");
  }
  return v.get<int>();
}

models::DemodulatorConfig demod_config_from_json(const json& j) {
  models::DemodulatorConfig c;
  c.in_channels = ck_int(j, "in_channels");
  c.input_length = ck_int(j, "input_length");
  c.num_symbols = ck_int(j, "num_symbols");
  c.num_classes = ck_int(j, "num_classes");
  c.stem_channels = ck_int(j, "stem_channels");
  c.num_blocks = ck_int(j, "num_blocks");
  c.stem_kernel = ck_int(j, "stem_kernel");
  c.block_kernel = ck_int(j, "block_kernel");
  return c;
}

models::MapGeneratorConfig gen_config_from_json(const json& j) {
  models::MapGeneratorConfig c;
  c.in_channels = ck_int(j, "in_channels");
  c.seq_len = ck_int(j, "seq_len");
  c.d_model = ck_int(j, "d_model");
  c.heads = ck_int(j, "heads");
  c.ffn_dim = ck_int(j, "ffn_dim");
  return c;
}

json registry_json(const nn::ParameterSet& ps, std::uint64_t& offset) {
  json arr = json::array();
  for (const auto& e : ps.entries()) {
    const auto count = static_cast<std::uint64_t>(e.tensor.numel());
    arr.push_back(json{{"name", e.name},
                       {"shape", e.tensor.shape()},
                       {"offset", offset},
                       {"count", count}});
    offset += count * 4;
  }
  return arr;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainConfig& config,
                     const models::Demodulator& model,
                     const models::MapGenerator* generator, int epoch) {
  const bool sp = config.psi_mode == psi::PsiMode::spectrum_preservative;
  if (sp != (generator != nullptr)) {
    throw std::invalid_argument(
        "checkpoint: a generator is stored exactly for spectrum_preservative configs");
  }

  json header;
  header["version"] = 1;
  header["config"] = config_to_json_obj(config);
  header["classifier"] = demod_config_to_json(model.config());
  if (generator) header["generator"] = gen_config_to_json(generator->config());
  header["epoch"] = epoch;
  header["seed"] = config.seed;
  std::uint64_t offset = 0;
  json reg;
  reg["classifier"] = registry_json(model.params(), offset);
  if (generator) reg["generator"] = registry_json(generator->params(), offset);
  header["registry"] = std::move(reg);

  const std::string htext = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
  out.write(kMagic, 8);
  const auto hlen = static_cast<std::uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  const auto write_blobs = [&](const nn::ParameterSet& ps) {
    for (const auto& e : ps.entries()) {
      const auto& v = e.tensor.values();
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * 4));
    }
  };
  write_blobs(model.params());
  if (generator) write_blobs(generator->params());
  if (!out) throw CheckpointError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());

  if (bytes.size() < 12) {
    throw CheckpointFormatError("checkpoint: file too short for magic and header length");
  }
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw CheckpointFormatError("checkpoint: bad magic, expected SIMPSI01");
  }
  std::uint32_t hlen = 0;
  std::memcpy(&hlen, bytes.data() + 8, 4);
  if (bytes.size() < 12 + static_cast<std::size_t>(hlen)) {
    throw CheckpointTruncatedError("checkpoint: header truncated");
  }
  json header;
  try {
    header = json::parse(bytes.substr(12, hlen));
  } catch (const json::exception& e) {
    throw CheckpointFormatError(std::string("checkpoint: unreadable header: ") + e.what());
  }

  const int version = ck_int(header, "version");
  if (version != 1) {
    throw CheckpointFormatError("checkpoint: unsupported version " + std::to_string(version));
  }

  Checkpoint ck;
  try {
    ck.config = config_from_json_obj(ck_field(header, "config"));
  } catch (const std::invalid_argument& e) {
    throw CheckpointFormatError(std::string("checkpoint: bad config: ") + e.what());
  }
  ck.classifier_config = demod_config_from_json(ck_field(header, "classifier"));
  const bool has_gen = header.contains("generator");
  if (has_gen) ck.generator_config = gen_config_from_json(ck_field(header, "generator"));
  if ((ck.config.psi_mode == psi::PsiMode::spectrum_preservative) != has_gen) {
    throw CheckpointFormatError(
        "checkpoint: generator blobs must be present exactly for spectrum_preservative");
  }
  ck.epoch = ck_int(header, "epoch");

  const json& reg = ck_field(header, "registry");
  const std::size_t blob_base = 12 + static_cast<std::size_t>(hlen);
  std::size_t end_max = blob_base;
  const auto read_blobs = [&](const json& arr) {
    if (!arr.is_array()) throw CheckpointFormatError("checkpoint: registry must be an array");
    std::vector<Checkpoint::Blob> out;
    for (const auto& ent : arr) {
      Checkpoint::Blob b;
      const json& namev = ck_field(ent, "name");
      if (!namev.is_string()) throw CheckpointFormatError("checkpoint: blob name must be a string");
      b.name = namev.get<std::string>();
      const json& shapev = ck_field(ent, "shape");
      if (!shapev.is_array()) {
        throw CheckpointFormatError("checkpoint: shape of '" + b.name + "' must be an array");
      }
      b.shape = shapev.get<std::vector<int>>();
      for (int d : b.shape) {
        if (d < 1) {
          throw CheckpointShapeError("checkpoint: bad dimension in shape of '" + b.name + "'");
        }
      }
      const auto off = ck_field(ent, "offset").get<std::uint64_t>();
      const auto count = ck_field(ent, "count").get<std::uint64_t>();
      if (count != static_cast<std::uint64_t>(ad::numel(b.shape))) {
        throw CheckpointShapeError("checkpoint: registry count disagrees with shape for '" +
                                   b.name + "'");
      }
      const std::size_t begin = blob_base + static_cast<std::size_t>(off);
      const std::size_t end = begin + static_cast<std::size_t>(count) * 4;
      if (end > bytes.size() || end < begin) {
        throw CheckpointTruncatedError("checkpoint: blob for '" + b.name + "' truncated");
      }
      b.data.resize(count);
      std::memcpy(b.data.data(), bytes.data() + begin, count * 4);
      end_max = std::max(end_max, end);
      out.push_back(std::move(b));
    }
    return out;
  };
  ck.classifier_blobs = read_blobs(ck_field(reg, "classifier"));
  if (has_gen) ck.generator_blobs = read_blobs(ck_field(reg, "generator"));
  if (bytes.size() > end_max) {
    throw CheckpointShapeError("checkpoint: trailing bytes after parameter blobs");
  }
  return ck;
}

void restore_parameters(nn::ParameterSet& params,
                        const std::vector<Checkpoint::Blob>& blobs) {
  const auto& es = params.entries();
  if (es.size() != blobs.size()) {
    throw CheckpointShapeError("checkpoint: " + std::to_string(blobs.size()) +
                               " tensors for a model with " + std::to_string(es.size()));
  }
  for (std::size_t i = 0; i < es.size(); ++i) {
    const auto& e = es[i];
    const auto& b = blobs[i];
    if (e.name != b.name) {
      throw CheckpointShapeError("checkpoint: tensor '" + b.name +
                                 "' where the model expects '" + e.name + "'");
    }
    if (e.tensor.shape() != b.shape) {
      throw CheckpointShapeError("checkpoint: shape mismatch for '" + e.name + "': file " +
                                 ad::shape_str(b.shape) + ", model " +
                                 ad::shape_str(e.tensor.shape()));
    }
    e.tensor.values() = b.data;
  }
}

LoadedRun load_model(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  rng::RngStream scratch(0);  // every tensor is overwritten by the restore
  models::Demodulator model(ck.classifier_config, scratch);
  restore_parameters(model.params(), ck.classifier_blobs);
  std::optional<models::MapGenerator> gen;
  if (ck.generator_config) {
    gen.emplace(*ck.generator_config, scratch);
    restore_parameters(gen->params(), ck.generator_blobs);
  }
  return LoadedRun{std::move(ck.config), ck.epoch, std::move(model), std::move(gen)};
}

void export_preservation_maps(psi::PsiMode mode, models::Demodulator* classifier,
                              models::MapGenerator* generator,
                              const fsk::FskDataset& dataset, const std::string& split,
                              const std::string& csv_path, const std::string& json_path) {
  if (mode != psi::PsiMode::magnitude && mode != psi::PsiMode::saliency &&
      mode != psi::PsiMode::spectrum_preservative) {
    throw std::invalid_argument("export: psi mode '" + psi::psi_mode_to_string(mode) +
                                "' has no data-dependent map");
  }
  const auto [begin, end] = dataset.split_range(split);
  if (end <= begin) throw std::invalid_argument("export: empty split '" + split + "'");
  const int n = end - begin;
  const int bins = dsp::half_bins(dataset.scheme.length);
  rng::RngStream unused(0);  // none of the exportable modes draws from it

  std::string csv = "sample";
  for (int k = 0; k < bins; ++k) csv += ",bin_" + std::to_string(k);
  csv += "\n";
  std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
  for (int i = begin; i < end; ++i) {
    const auto xf = dsp::rfft(dataset.signal(i));
    const auto labels = dataset.label_row(i);
    const auto p = psi_map_for(mode, xf, classifier, generator, labels, unused);
    csv += std::to_string(i - begin);
    for (int k = 0; k < bins; ++k) {
      const float v = p.values[static_cast<std::size_t>(k)];
      csv += ',';
      csv += fmt9(v);
      sum[static_cast<std::size_t>(k)] += v;
    }
    csv += "\n";
  }
  std::vector<float> mean(static_cast<std::size_t>(bins));
  csv += "MEAN";
  for (int k = 0; k < bins; ++k) {
    mean[static_cast<std::size_t>(k)] = static_cast<float>(sum[static_cast<std::size_t>(k)] / n);
    csv += ',';
    csv += fmt9(mean[static_cast<std::size_t>(k)]);
  }
  csv += "\n";
  spit(csv_path, csv);

  std::vector<int> order(static_cast<std::size_t>(bins));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (mean[static_cast<std::size_t>(a)] != mean[static_cast<std::size_t>(b)]) {
      return mean[static_cast<std::size_t>(a)] > mean[static_cast<std::size_t>(b)];
    }
    return a < b;
  });
  const auto top = static_cast<std::size_t>(std::min(10, bins));
  std::vector<int> top_bins(order.begin(), order.begin() + top);
  std::vector<float> top_values;
  top_values.reserve(top);
  for (const int b : top_bins) top_values.push_back(mean[static_cast<std::size_t>(b)]);
  const json side{{"split", split},
                  {"mode", psi::psi_mode_to_string(mode)},
                  {"bins", top_bins},
                  {"values", top_values}};
  spit(json_path, side.dump(2) + "\n");
}

void write_run_dir(const std::string& dir, const TrainConfig& config,
                   const TrainOutput& out) {
  fs::create_directories(dir);
  spit(dir + "/config.json", config_to_json(config));

  const json metrics{
      {"dataset", config.dataset},
      {"seed", config.seed},
      {"psi_mode", psi::psi_mode_to_string(config.psi_mode)},
      {"augmentation", aug::kind_to_string(config.augmentation.kind)},
      {"accuracy", out.result.test_accuracy},
      {"macro_auprc", out.result.test_macro_auprc},
      {"per_class_auprc", out.result.per_class_auprc},
      {"epoch_losses", out.result.epoch_losses},
      {"wall_seconds", out.result.wall_seconds},
  };
  spit(dir + "/metrics.json", metrics.dump(2) + "\n");

  std::string csv = "epoch,train_loss,pc_loss,val_accuracy\n";
  for (const auto& el : out.log) {
    csv += std::to_string(el.epoch);
    csv += ',';
    csv += fmt9(el.train_loss);
    csv += ',';
    csv += fmt9(el.pc_loss);
    csv += ',';
    if (el.has_val) csv += fmt9(el.val_accuracy);
    csv += "\n";
  }
  spit(dir + "/train_log.csv", csv);

  save_checkpoint(dir + "/checkpoint.simpsi", config, out.classifier,
                  out.generator ? &*out.generator : nullptr, config.epochs);
}

float compare_runs(const std::string& run_dir, const std::string& baseline_dir) {
  const auto load = [](const std::string& dir) {
    std::ifstream in(dir + "/metrics.json");
    if (!in) throw std::runtime_error("compare: cannot read '" + dir + "/metrics.json'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw std::runtime_error("compare: bad metrics in '" + dir + "': " + e.what());
    }
    return j;
  };
  const json a = load(run_dir);
  const json b = load(baseline_dir);
  std::string da, db;
  float aa = 0.0f, ab = 0.0f;
  try {
    da = a.at("dataset").get<std::string>();
    db = b.at("dataset").get<std::string>();
    aa = a.at("accuracy").get<float>();
    ab = b.at("accuracy").get<float>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("compare: metrics missing fields: ") + e.what());
  }
  if (da != db) {
    throw std::invalid_argument("compare: datasets differ ('" + da + "' vs '" + db + "')");
  }
  return aa - ab;
}

}  // namespace simpsi::harness
