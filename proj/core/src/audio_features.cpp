// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/audio_features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <fmt/format.h>
#include <map>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "avattn/error.hpp"
#include "avattn/hash.hpp"

namespace avattn {
namespace {

// FFTW planning is not thread-safe; execution with the new-array interface
// is. Plans are created once per size and never destroyed.
fftw_plan PlanForSize(int n) {
  static std::mutex mu;
  static std::map<int, fftw_plan> plans;
  std::lock_guard lock(mu);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  std::vector<double> in(n);
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(
      n, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
      FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (plan == nullptr) Fail(ErrorKind::kConfig, fmt::format("fftw: cannot plan size {}", n));
  plans.emplace(n, plan);
  return plan;
}

int NextPow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

void CheckFinite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) Fail(ErrorKind::kInvalidInput, fmt::format("{}: non-finite sample", what));
  }
}

}  // namespace

void ValidateClip(const AudioClip& clip) {
  Require(clip.sample_rate > 0, ErrorKind::kInvalidInput,
          fmt::format("audio clip: sample rate must be positive, got {}", clip.sample_rate));
  CheckFinite(clip.samples, "audio clip");
}

FrameLayout ResolveLayout(const FilterbankConfig& cfg, int sample_rate) {
  Require(sample_rate > 0, ErrorKind::kConfig, "filterbank: sample rate must be positive");
  Require(cfg.pre_emphasis >= 0.0 && cfg.pre_emphasis < 1.0, ErrorKind::kConfig,
          "filterbank: pre_emphasis must lie in [0, 1)");
  Require(cfg.window_ms > 0.0, ErrorKind::kConfig, "filterbank: window_ms must be positive");
  Require(cfg.overlap_ratio >= 0.0 && cfg.overlap_ratio < 1.0, ErrorKind::kConfig,
          "filterbank: overlap_ratio must lie in [0, 1)");
  Require(cfg.n_filters >= 2, ErrorKind::kConfig, "filterbank: need at least 2 filters");
  Require(cfg.log_floor > 0.0, ErrorKind::kConfig, "filterbank: log_floor must be positive");

  FrameLayout layout;
  layout.window = static_cast<int>(std::lround(cfg.window_ms * sample_rate / 1000.0));
  Require(layout.window >= 2, ErrorKind::kConfig, "filterbank: window shorter than 2 samples");
  layout.hop = std::max(1, static_cast<int>(std::lround(layout.window * (1.0 - cfg.overlap_ratio))));
  if (cfg.fft_size == 0) {
    layout.fft_size = NextPow2(layout.window);
  } else {
    Require(cfg.fft_size >= layout.window && std::has_single_bit(static_cast<unsigned>(cfg.fft_size)),
            ErrorKind::kConfig, "filterbank: fft_size must be a power of two >= window length");
    layout.fft_size = cfg.fft_size;
  }
  const double nyquist = sample_rate / 2.0;
  layout.f_min = cfg.f_min;
  layout.f_max = cfg.f_max > 0.0 ? cfg.f_max : nyquist;
  Require(layout.f_min >= 0.0 && layout.f_min < layout.f_max && layout.f_max <= nyquist,
          ErrorKind::kConfig, "filterbank: need 0 <= f_min < f_max <= sample_rate/2");
  return layout;
}

std::string ConfigHash(const FilterbankConfig& cfg, int sample_rate) {
  const FrameLayout l = ResolveLayout(cfg, sample_rate);
  return Sha256Hex(fmt::format(
      "fbank/v1 sr={} pre={:.17g} win={} hop={} fft={} nf={} floor={:.17g} fmin={:.17g} fmax={:.17g}",
      sample_rate, cfg.pre_emphasis, l.window, l.hop, l.fft_size, cfg.n_filters, cfg.log_floor,
      l.f_min, l.f_max));
}

AudioClip PreEmphasize(const AudioClip& clip, double coeff) {
  Require(coeff >= 0.0 && coeff < 1.0, ErrorKind::kInvalidInput,
          "pre-emphasis: coefficient must lie in [0, 1)");
  ValidateClip(clip);
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.resize(clip.samples.size());
  if (clip.samples.empty()) return out;
  out.samples[0] = clip.samples[0];
  for (std::size_t n = 1; n < clip.samples.size(); ++n) {
    out.samples[n] = clip.samples[n] - coeff * clip.samples[n - 1];
  }
  return out;
}

std::vector<double> HammingWindow(int length) {
  std::vector<double> w(length);
  if (length == 1) {
    w[0] = 1.0;
    return w;
  }
  for (int n = 0; n < length; ++n) {
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (length - 1));
  }
  return w;
}

Eigen::MatrixXd FrameSignal(const AudioClip& clip, const FilterbankConfig& cfg) {
  ValidateClip(clip);
  const FrameLayout l = ResolveLayout(cfg, clip.sample_rate);
  const auto n = static_cast<long>(clip.samples.size());
  if (n < l.window) {
    Fail(ErrorKind::kTooShort,
         fmt::format("framing: clip has {} samples, one window needs {}", n, l.window));
  }
  const long frames = (n - l.window) / l.hop + 1;
  const std::vector<double> window = HammingWindow(l.window);
  Eigen::MatrixXd out(frames, l.window);
  for (long t = 0; t < frames; ++t) {
    const double* src = clip.samples.data() + t * l.hop;
    for (int k = 0; k < l.window; ++k) out(t, k) = src[k] * window[k];
  }
  return out;
}

double HzToMel(double hz) {
  Require(hz >= 0.0, ErrorKind::kInvalidInput, fmt::format("hz_to_mel: negative frequency {}", hz));
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double MelToHz(double mel) {
  Require(mel >= 0.0, ErrorKind::kInvalidInput, fmt::format("mel_to_hz: negative mel {}", mel));
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> PowerSpectrum(std::span<const double> frame, int fft_size) {
  Require(fft_size >= 2 && std::has_single_bit(static_cast<unsigned>(fft_size)), ErrorKind::kConfig,
          "power spectrum: fft_size must be a power of two");
  Require(frame.size() <= static_cast<std::size_t>(fft_size), ErrorKind::kShape,
          "power spectrum: frame longer than fft_size");
  CheckFinite(frame, "power spectrum");
  std::vector<double> in(fft_size, 0.0);
  std::copy(frame.begin(), frame.end(), in.begin());
  std::vector<std::complex<double>> out(fft_size / 2 + 1);
  fftw_execute_dft_r2c(PlanForSize(fft_size), in.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  std::vector<double> power(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) power[k] = std::norm(out[k]) / fft_size;
  return power;
}

namespace {

std::vector<double> MelPoints(const FilterbankConfig& cfg, const FrameLayout& l) {
  const double lo = HzToMel(l.f_min);
  const double hi = HzToMel(l.f_max);
  std::vector<double> pts(cfg.n_filters + 2);
  for (int i = 0; i < cfg.n_filters + 2; ++i) {
    pts[i] = lo + (hi - lo) * i / (cfg.n_filters + 1);
  }
  return pts;
}

}  // namespace

std::vector<double> MelFilterCenters(const FilterbankConfig& cfg, int sample_rate) {
  const FrameLayout l = ResolveLayout(cfg, sample_rate);
  const std::vector<double> pts = MelPoints(cfg, l);
  std::vector<double> centers(cfg.n_filters);
  for (int i = 0; i < cfg.n_filters; ++i) centers[i] = MelToHz(pts[i + 1]);
  return centers;
}

Eigen::MatrixXd MelFilterMatrix(const FilterbankConfig& cfg, int sample_rate) {
  const FrameLayout l = ResolveLayout(cfg, sample_rate);
  const std::vector<double> pts = MelPoints(cfg, l);
  const int bins = l.fft_size / 2 + 1;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(cfg.n_filters, bins);
  for (int r = 0; r < cfg.n_filters; ++r) {
    const double left = pts[r], center = pts[r + 1], right = pts[r + 2];
    for (int k = 0; k < bins; ++k) {
      const double mel = HzToMel(static_cast<double>(k) * sample_rate / l.fft_size);
      if (mel <= left || mel >= right) continue;
      m(r, k) = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
    }
    const double peak = m.row(r).maxCoeff();
    if (peak <= 0.0) {
      Fail(ErrorKind::kConfig,
           fmt::format("mel filterbank: filter {} of {} has no FFT bin in its support "
                       "(fft_size {} too small)", r, cfg.n_filters, l.fft_size));
    }
    m.row(r) /= peak;
  }
  return m;
}

FilterbankFeatures ExtractFeatures(const AudioClip& clip, const FilterbankConfig& cfg) {
  const FrameLayout l = ResolveLayout(cfg, clip.sample_rate);
  const AudioClip emphasized = PreEmphasize(clip, cfg.pre_emphasis);
  const Eigen::MatrixXd frames = FrameSignal(emphasized, cfg);
  const Eigen::MatrixXd filters = MelFilterMatrix(cfg, clip.sample_rate);

  FilterbankFeatures out;
  out.values.resize(frames.rows(), cfg.n_filters);
  out.frame_times.resize(frames.rows());
  std::vector<double> frame(l.window);
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    for (int k = 0; k < l.window; ++k) frame[k] = frames(t, k);
    const std::vector<double> power = PowerSpectrum(frame, l.fft_size);
    const Eigen::Map<const Eigen::VectorXd> p(power.data(), static_cast<Eigen::Index>(power.size()));
    const Eigen::VectorXd energy = filters * p;
    for (int j = 0; j < cfg.n_filters; ++j) {
      out.values(t, j) = std::log(std::max(energy[j], cfg.log_floor));
    }
    out.frame_times[t] = (static_cast<double>(t) * l.hop + l.window / 2.0) / clip.sample_rate;
  }
  return out;
}

NormStats FitNormStats(std::span<const FilterbankFeatures> corpus) {
  Eigen::Index dims = -1;
  long total = 0;
  for (const auto& f : corpus) {
    if (f.num_frames() == 0) continue;
    if (dims < 0) dims = f.num_filters();
    Require(f.num_filters() == dims, ErrorKind::kShape, "norm stats: inconsistent filter counts");
    total += f.num_frames();
  }
  if (total < 2) {
    Fail(ErrorKind::kInsufficientData,
         fmt::format("norm stats: need at least 2 feature frames, got {}", total));
  }
  // Shifted two-pass: identical inputs give an exact mean and zero variance.
  Eigen::VectorXd shift;
  for (const auto& f : corpus) {
    if (f.num_frames() > 0) {
      shift = f.values.row(0).transpose();
      break;
    }
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dims);
  for (const auto& f : corpus) {
    for (Eigen::Index t = 0; t < f.num_frames(); ++t) sum += f.values.row(t).transpose() - shift;
  }
  NormStats stats;
  stats.mean = shift + sum / static_cast<double>(total);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(dims);
  for (const auto& f : corpus) {
    for (Eigen::Index t = 0; t < f.num_frames(); ++t) {
      sq += (f.values.row(t).transpose() - stats.mean).array().square().matrix();
    }
  }
  stats.std = (sq / static_cast<double>(total)).array().sqrt().max(kNormStdFloor).matrix();
  return stats;
}

FilterbankFeatures ApplyNorm(const FilterbankFeatures& features, const NormStats& stats) {
  Require(stats.mean.size() == features.num_filters() && stats.std.size() == features.num_filters(),
          ErrorKind::kShape, "apply norm: stats dimension does not match features");
  FilterbankFeatures out;
  out.frame_times = features.frame_times;
  out.values = (features.values.rowwise() - stats.mean.transpose()).array().rowwise() /
               stats.std.transpose().array();
  return out;
}

}  // namespace avattn
