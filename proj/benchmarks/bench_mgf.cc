// benchmarks/bench_mgf.cc
//
// Microbenchmarks for the kernels that dominate training time. Run with
// ./benchmarks/mgf_bench; pass --benchmark_filter=<regex> to narrow.

#include <benchmark/benchmark.h>

#include <vector>

#include "mgf/autodiff.hpp"
#include "mgf/corpus.hpp"
#include "mgf/dsp.hpp"
#include "mgf/encoder.hpp"
#include "mgf/objectives.hpp"
#include "mgf/rng.hpp"
#include "mgf/trainer.hpp"

using namespace mgf;

namespace {

dsp::Waveform noise_wave(int64_t n, uint64_t seed) {
  Rng rng(seed);
  dsp::Waveform w;
  w.samples.resize(static_cast<size_t>(n));
  for (double& s : w.samples) s = rng.uniform(-0.5, 0.5);
  return w;
}

Array random_matrix(int64_t r, int64_t c, uint64_t seed) {
  Rng rng(seed);
  Array a({r, c});
  for (int64_t i = 0; i < a.numel(); ++i) a.at(i) = rng.normal();
  return a;
}

void bm_fft(benchmark::State& state) {
  int64_t n = state.range(0);
  Rng rng(1);
  std::vector<double> re0(static_cast<size_t>(n)), im0(re0.size(), 0.0);
  for (double& x : re0) x = rng.uniform(-1.0, 1.0);
  for (auto _ : state) {
    auto re = re0;
    auto im = im0;
    dsp::fft(re, im);
    benchmark::DoNotOptimize(re.data());
  }
}
BENCHMARK(bm_fft)->Arg(512)->Arg(8192);

void bm_lps_25ms(benchmark::State& state) {
  dsp::Waveform w = noise_wave(32000, 2);
  auto grid = dsp::frame_signal_padded(w, 400, 160, dsp::frame_count_10ms(w.size()));
  for (auto _ : state) {
    auto lps = dsp::log_power_spectrum(grid, 512);
    benchmark::DoNotOptimize(lps.values.data());
  }
}
BENCHMARK(bm_lps_25ms);

void bm_mfcc_25ms(benchmark::State& state) {
  dsp::Waveform w = noise_wave(32000, 3);
  auto grid = dsp::frame_signal_padded(w, 400, 160, dsp::frame_count_10ms(w.size()));
  for (auto _ : state) {
    auto m = dsp::mfcc(grid, 40, 13);
    benchmark::DoNotOptimize(m.values.data());
  }
}
BENCHMARK(bm_mfcc_25ms);

void bm_crop_targets(benchmark::State& state) {
  dsp::Waveform w = noise_wave(32000, 4);
  for (auto _ : state) {
    auto t = objectives::crop_targets(w, true);
    benchmark::DoNotOptimize(&t);
  }
}
BENCHMARK(bm_crop_targets);

void bm_matmul(benchmark::State& state) {
  int64_t n = state.range(0);
  auto a = ad::constant(random_matrix(n, n, 5));
  auto b = ad::constant(random_matrix(n, n, 6));
  for (auto _ : state) {
    auto c = ad::matmul(a, b);
    benchmark::DoNotOptimize(c->value.data());
  }
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(256);

void bm_conv1d_head(benchmark::State& state) {
  // The lps400 projection head shape: 200 frames, d64 in, 4097 out, k=3.
  auto x = ad::constant(random_matrix(200, 64, 7));
  auto w = ad::constant(random_matrix(3 * 64, 4097, 8));
  Rng rng(9);
  Array bias({4097});
  for (int64_t i = 0; i < bias.numel(); ++i) bias.at(i) = rng.normal();
  auto b = ad::constant(bias);
  for (auto _ : state) {
    auto y = ad::conv1d(x, w, b, 3, 1, 1);
    benchmark::DoNotOptimize(y->value.data());
  }
}
BENCHMARK(bm_conv1d_head);

void bm_encoder_forward(benchmark::State& state) {
  encoder::EncoderConfig cfg;  // desk dims
  encoder::Model model = encoder::init_model(cfg, 1);
  dsp::Waveform w = noise_wave(32000, 10);
  for (auto _ : state) {
    auto rep = encoder::encode(
        encoder::stem_forward(encoder::waveform_input(w), model), model);
    benchmark::DoNotOptimize(rep->value.data());
  }
}
BENCHMARK(bm_encoder_forward);

void bm_train_step(benchmark::State& state) {
  corpus::SynthSpec spec;
  spec.class_count = 4;
  spec.speaker_count = 4;
  spec.utterances_per_speaker = 2;
  spec.seed = 11;
  corpus::Corpus c = corpus::synth_corpus(spec);
  corpus::NoiseBank bank;

  trainer::TrainConfig cfg;  // desk
  cfg.seed = 13;
  trainer::TrainState st = trainer::init_state(cfg);
  std::vector<const corpus::Utterance*> batch;
  for (const auto& u : c.utterances) batch.push_back(&u);

  for (auto _ : state) {
    auto report = trainer::train_step(batch, st, cfg, bank);
    benchmark::DoNotOptimize(report.l_total);
  }
}
BENCHMARK(bm_train_step)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
