// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

// Minimal double-precision layers with hand-written backward passes.
// Layers only hold indices into a ParameterSet, so a model that owns its
// ParameterSet stays a plain copyable value.

#pragma once

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace avattn::nn {

enum class ParamGroup { kBackbone, kHeadPose, kHeadGaze };

std::string_view ToString(ParamGroup group);

struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::kBackbone;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
};

class ParameterSet {
 public:
  int Add(std::string name, ParamGroup group, Eigen::MatrixXd init);

  Parameter& operator[](int i) { return params_[i]; }
  const Parameter& operator[](int i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::span<Parameter> params() { return params_; }
  std::span<const Parameter> params() const { return params_; }

  void ZeroGrad();
  double GradNorm() const;
  void ScaleGrad(double factor);
  std::size_t NumScalars() const;

  /// SHA-256 over names, shapes and values of parameters matching `pred`.
  std::string Hash(const std::function<bool(const Parameter&)>& pred) const;
  std::string GroupHash(ParamGroup group) const;

  /// Largest |grad| over parameters whose name starts with `prefix`.
  double MaxAbsGrad(std::string_view prefix) const;

 private:
  std::vector<Parameter> params_;
};

/// Channel-planar feature map: data is (height*width) x channels.
struct FeatureMap {
  Eigen::MatrixXd data;
  int height = 0;
  int width = 0;

  int channels() const { return static_cast<int>(data.cols()); }
};

struct Linear {
  int in = 0;
  int out = 0;
  int weight = -1;  // out x in
  int bias = -1;    // out x 1

  static Linear Create(ParameterSet& ps, const std::string& name, ParamGroup group, int in, int out,
                       double init_std, std::mt19937_64& rng);

  Eigen::VectorXd Forward(const ParameterSet& ps, const Eigen::VectorXd& x) const;
  /// Accumulates parameter gradients and returns dL/dx.
  Eigen::VectorXd Backward(ParameterSet& ps, const Eigen::VectorXd& x, const Eigen::VectorXd& dy) const;
};

struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  int weight = -1;  // (in*k*k) x out
  int bias = -1;    // 1 x out

  struct Cache {
    Eigen::MatrixXd cols;  // (Ho*Wo) x (in*k*k)
    int in_height = 0;
    int in_width = 0;
  };

  static Conv2d Create(ParameterSet& ps, const std::string& name, ParamGroup group, int in, int out,
                       int kernel, int stride, double init_std, std::mt19937_64& rng);

  int OutSize(int n) const { return (n + 2 * padding - kernel) / stride + 1; }
  FeatureMap Forward(const ParameterSet& ps, const FeatureMap& x, Cache* cache) const;
  FeatureMap Backward(ParameterSet& ps, const Cache& cache, const FeatureMap& dy) const;
};

/// Single-direction LSTM returning the final hidden state.
struct Lstm {
  int in = 0;
  int hidden = 0;
  int w_input = -1;   // 4H x in, gate order i, f, g, o
  int w_hidden = -1;  // 4H x H
  int bias = -1;      // 4H x 1

  struct Step {
    Eigen::VectorXd x, h_prev, c_prev, i, f, g, o, c, tanh_c;
  };
  struct Cache {
    std::vector<Step> steps;
    std::vector<int> order;  // input row consumed at each step
  };

  static Lstm Create(ParameterSet& ps, const std::string& name, ParamGroup group, int in, int hidden,
                     std::mt19937_64& rng);

  /// seq is T x in; `reverse` consumes rows T-1..0.
  Eigen::VectorXd Forward(const ParameterSet& ps, const Eigen::MatrixXd& seq, bool reverse, Cache* cache) const;
  /// Gradient w.r.t. the input rows, in the original row order.
  Eigen::MatrixXd Backward(ParameterSet& ps, const Cache& cache, const Eigen::VectorXd& dh_final) const;
};

inline Eigen::VectorXd Relu(const Eigen::VectorXd& x) { return x.cwiseMax(0.0); }
inline Eigen::VectorXd ReluBackward(const Eigen::VectorXd& y, const Eigen::VectorXd& dy) {
  return (y.array() > 0.0).select(dy, 0.0);
}

/// Rescales gradients so their global L2 norm is at most max_norm; returns
/// the norm before clipping.
double ClipGradNorm(ParameterSet& ps, double max_norm);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(const ParameterSet& ps, AdamOptions options = {});

  void Step(ParameterSet& ps, double lr);

  long step_count() const { return step_; }
  std::vector<Eigen::MatrixXd>& first_moments() { return m_; }
  std::vector<Eigen::MatrixXd>& second_moments() { return v_; }
  const std::vector<Eigen::MatrixXd>& first_moments() const { return m_; }
  const std::vector<Eigen::MatrixXd>& second_moments() const { return v_; }
  void set_step_count(long step) { step_ = step; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  long step_ = 0;
  std::vector<Eigen::MatrixXd> m_;
  std::vector<Eigen::MatrixXd> v_;
};

Eigen::MatrixXd RandomNormal(int rows, int cols, double stddev, std::mt19937_64& rng);

}  // namespace avattn::nn
