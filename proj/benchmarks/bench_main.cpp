// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "avattn/audio_features.hpp"
#include "avattn/evaluation.hpp"
#include "avattn/model.hpp"

namespace {

avattn::AudioClip NoiseClip(double seconds) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.1);
  avattn::AudioClip clip;
  clip.samples.resize(static_cast<std::size_t>(seconds * clip.sample_rate));
  for (auto& s : clip.samples) s = n(rng);
  return clip;
}

void BM_ExtractFeatures(benchmark::State& state) {
  const avattn::AudioClip clip = NoiseClip(static_cast<double>(state.range(0)) / 1000.0);
  const avattn::FilterbankConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(avattn::ExtractFeatures(clip, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(clip.samples.size()));
}
BENCHMARK(BM_ExtractFeatures)->Arg(280)->Arg(10000);

avattn::ModelInput ChunkInput(const avattn::ModelConfig& cfg) {
  std::mt19937_64 rng(2);
  avattn::ModelInput in;
  for (int t = 0; t < cfg.chunk_len; ++t) {
    in.frames.push_back({avattn::nn::RandomNormal(cfg.input_resolution * cfg.input_resolution, 3, 0.3, rng),
                         cfg.input_resolution, cfg.input_resolution});
  }
  in.audio = avattn::nn::RandomNormal(27, cfg.audio_input_dim, 1.0, rng);
  return in;
}

void BM_ForwardBackward(benchmark::State& state) {
  avattn::ModelConfig cfg;
  cfg.input_resolution = static_cast<int>(state.range(0));
  avattn::AvModel model = avattn::AvModel::Create(cfg, 3);
  const avattn::ModelInput in = ChunkInput(cfg);
  const avattn::Vector6d dh = avattn::Vector6d::Ones();
  const Eigen::Vector3d dg = Eigen::Vector3d::Ones();
  for (auto _ : state) {
    avattn::ForwardTape tape;
    model.Forward(in, avattn::ModalityMask::AudioVisual(), tape);
    model.Backward(tape, dh, dg);
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_AudioOnlyForward(benchmark::State& state) {
  const avattn::ModelConfig cfg;
  const avattn::AvModel model = avattn::AvModel::Create(cfg, 4);
  const avattn::ModelInput in = ChunkInput(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(model.Forward(in, avattn::ModalityMask::AudioOnly()));
}
BENCHMARK(BM_AudioOnlyForward)->Unit(benchmark::kMicrosecond);

void BM_WeightedKnn(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd train = avattn::nn::RandomNormal(static_cast<int>(state.range(0)), 256, 1.0, rng);
  const Eigen::MatrixXd test = avattn::nn::RandomNormal(100, 256, 1.0, rng);
  std::vector<int> labels(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = 1 + static_cast<int>(i % 9);
  for (auto _ : state) benchmark::DoNotOptimize(avattn::WeightedKnn(train, labels, test, {}));
}
BENCHMARK(BM_WeightedKnn)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
