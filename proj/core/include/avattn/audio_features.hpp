// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

// Log mel-filterbank front-end: pre-emphasis, Hamming-windowed framing,
// power spectrum, triangular mel filters, log compression and per-coefficient
// mean/variance normalisation.

#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace avattn {

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Throws kInvalidInput for a non-positive rate or any non-finite sample.
void ValidateClip(const AudioClip& clip);

struct FilterbankConfig {
  double pre_emphasis = 0.97;
  double window_ms = 10.0;
  double overlap_ratio = 0.5;
  int n_filters = 40;
  int fft_size = 0;      // 0 selects the smallest power of two >= window
  double log_floor = 1e-10;
  double f_min = 0.0;
  double f_max = 0.0;    // 0 selects Nyquist
};

/// Sample-domain framing resolved from a config and a sample rate.
struct FrameLayout {
  int window = 0;
  int hop = 0;
  int fft_size = 0;
  double f_min = 0.0;
  double f_max = 0.0;
};

FrameLayout ResolveLayout(const FilterbankConfig& cfg, int sample_rate);

/// Stable hex digest of every field that affects feature values.
std::string ConfigHash(const FilterbankConfig& cfg, int sample_rate);

struct FilterbankFeatures {
  Eigen::MatrixXd values;           // T x n_filters, natural-log energies
  std::vector<double> frame_times;  // frame centres, seconds

  Eigen::Index num_frames() const { return values.rows(); }
  Eigen::Index num_filters() const { return values.cols(); }
};

struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

inline constexpr double kNormStdFloor = 1e-8;

AudioClip PreEmphasize(const AudioClip& clip, double coeff);

std::vector<double> HammingWindow(int length);

/// Rows are frames of length `window`, already multiplied by the Hamming
/// window. Pre-emphasis is not applied here.
Eigen::MatrixXd FrameSignal(const AudioClip& clip, const FilterbankConfig& cfg);

double HzToMel(double hz);
double MelToHz(double mel);

/// |DFT_k|^2 / fft_size for k = 0..fft_size/2 of the zero-padded frame.
std::vector<double> PowerSpectrum(std::span<const double> frame, int fft_size);

/// Centre frequencies (Hz) of the n_filters triangles, ascending.
std::vector<double> MelFilterCenters(const FilterbankConfig& cfg, int sample_rate);

/// n_filters x (fft_size/2 + 1); each row is a triangle in the mel domain
/// sampled at the FFT bin frequencies and rescaled to a peak of exactly 1.
Eigen::MatrixXd MelFilterMatrix(const FilterbankConfig& cfg, int sample_rate);

FilterbankFeatures ExtractFeatures(const AudioClip& clip, const FilterbankConfig& cfg);

NormStats FitNormStats(std::span<const FilterbankFeatures> corpus);
FilterbankFeatures ApplyNorm(const FilterbankFeatures& features, const NormStats& stats);

}  // namespace avattn
