#include <benchmark/benchmark.h>

#include <vector>

#include "simpsi/harness.hpp"

using namespace simpsi;

namespace {

struct Batch {
  fsk::FskDataset ds;
  ad::Tensor x;
  std::vector<int> labels;
  std::vector<dsp::HalfSpectrum> spectra;
};

Batch make_batch(int order, int n) {
  Batch b{fsk::generate_dataset(fsk::make_scheme(order, 10.0f, 1), {n, 1, 1}, 1),
          ad::Tensor({n, 1, 128}), {}, {}};
  auto& xv = b.x.values();
  for (int i = 0; i < n; ++i) {
    const auto s = b.ds.signal(i);
    std::copy(s.data.begin(), s.data.end(), xv.begin() + static_cast<std::size_t>(i) * 128);
    b.spectra.push_back(dsp::rfft(s));
    const auto y = b.ds.label_row(i);
    b.labels.insert(b.labels.end(), y.begin(), y.end());
  }
  return b;
}

}  // namespace

// one classifier optimization step (forward, loss, backward, Adam) at the
// default batch size
static void BM_classifier_step(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto b = make_batch(32, n);
  models::DemodulatorConfig cfg;
  rng::RngStream r(1);
  models::Demodulator model(cfg, r);
  nn::Adam opt(model.params(), nn::AdamOptions{.lr = 1e-3f});
  for (auto _ : state) {
    auto loss = models::demodulator_loss(model.forward(b.x, true), b.labels);
    ad::backward(loss);
    opt.step();
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_classifier_step)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

// one generator optimization step: generator forward, two mixed batches
// through the frozen classifier, contrastive loss, backward, Adam
static void BM_generator_step(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto b = make_batch(32, n);
  models::DemodulatorConfig cfg;
  rng::RngStream r(1);
  models::Demodulator model(cfg, r);
  models::MapGeneratorConfig gcfg;
  models::MapGenerator gen(gcfg, r);
  nn::Adam opt(gen.params(), nn::AdamOptions{.lr = 1e-3f});
  aug::AugmentSpec spec;
  spec.kind = aug::Kind::jitter;
  rng::RngStream aug_rng(2);
  std::vector<dsp::HalfSpectrum> pos, neg;
  for (int i = 0; i < n; ++i) {
    pos.push_back(dsp::rfft(aug::apply(spec, b.ds.signal(i), aug_rng)));
    neg.push_back(dsp::rfft(aug::apply(spec, b.ds.signal(i), aug_rng)));
  }
  for (auto _ : state) {
    nn::FreezeGuard freeze(model.params());
    auto pmap = gen.forward(models::generator_features(b.spectra));
    auto xp = psi::mix_irfft_op(pmap, b.spectra, pos);
    auto xn = psi::mix_irfft_op(ad::add_scalar(ad::mul_scalar(pmap, -1.0f), 1.0f), b.spectra,
                                neg);
    auto lpos = models::demodulator_loss(model.forward(xp, false), b.labels);
    auto lneg = models::demodulator_loss(model.forward(xn, false), b.labels);
    auto lpc = psi::preservation_contrastive_loss(lpos, ad::Tensor::scalar(2.0f), lneg, 0.1f,
                                                  0.5f);
    ad::backward(lpc);
    opt.step();
    benchmark::DoNotOptimize(lpc.item());
  }
}
BENCHMARK(BM_generator_step)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

// the per-sample data path of a classifier step: augment, transform, mix
static void BM_augment_and_preserve(benchmark::State& state) {
  const auto ds = fsk::generate_dataset(fsk::make_scheme(8, 10.0f, 1), {1, 1, 1}, 1);
  const auto x = ds.signal(0);
  const auto xf = dsp::rfft(x);
  aug::AugmentSpec spec;
  spec.kind = aug::Kind::jitter;
  rng::RngStream rng(3);
  const auto p = psi::random_map(rng, xf.bins());
  for (auto _ : state) {
    auto out = psi::augment_and_preserve(x, xf, p, spec, rng);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_augment_and_preserve);

// eval-mode batched forward, the inference path
static void BM_demodulator_infer(benchmark::State& state) {
  auto b = make_batch(32, 64);
  models::DemodulatorConfig cfg;
  rng::RngStream r(1);
  models::Demodulator model(cfg, r);
  ad::NoGradGuard ng;
  for (auto _ : state) {
    auto out = model.forward(b.x, false);
    benchmark::DoNotOptimize(out.values().data());
  }
}
BENCHMARK(BM_demodulator_infer)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
