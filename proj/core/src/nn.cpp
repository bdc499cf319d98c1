// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/nn.hpp"

#include <cmath>
#include <fmt/format.h>

#include "avattn/error.hpp"
#include "avattn/hash.hpp"

namespace avattn::nn {

std::string_view ToString(ParamGroup group) {
  switch (group) {
    case ParamGroup::kBackbone: return "backbone";
    case ParamGroup::kHeadPose: return "head_pose";
    case ParamGroup::kHeadGaze: return "head_gaze";
  }
  return "unknown";
}

int ParameterSet::Add(std::string name, ParamGroup group, Eigen::MatrixXd init) {
  Parameter p;
  p.name = std::move(name);
  p.group = group;
  p.grad = Eigen::MatrixXd::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

void ParameterSet::ZeroGrad() {
  for (auto& p : params_) p.grad.setZero();
}

double ParameterSet::GradNorm() const {
  double sq = 0.0;
  for (const auto& p : params_) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

void ParameterSet::ScaleGrad(double factor) {
  for (auto& p : params_) p.grad *= factor;
}

std::size_t ParameterSet::NumScalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::string ParameterSet::Hash(const std::function<bool(const Parameter&)>& pred) const {
  Sha256 h;
  for (const auto& p : params_) {
    if (!pred(p)) continue;
    h.Update(fmt::format("{}:{}x{};", p.name, p.value.rows(), p.value.cols()));
    h.Update(std::span<const double>(p.value.data(), static_cast<std::size_t>(p.value.size())));
  }
  return h.HexDigest();
}

std::string ParameterSet::GroupHash(ParamGroup group) const {
  return Hash([group](const Parameter& p) { return p.group == group; });
}

double ParameterSet::MaxAbsGrad(std::string_view prefix) const {
  double m = 0.0;
  for (const auto& p : params_) {
    if (p.name.starts_with(prefix) && p.grad.size() > 0) m = std::max(m, p.grad.cwiseAbs().maxCoeff());
  }
  return m;
}

Eigen::MatrixXd RandomNormal(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear Linear::Create(ParameterSet& ps, const std::string& name, ParamGroup group, int in, int out,
                      double init_std, std::mt19937_64& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = ps.Add(name + ".weight", group, RandomNormal(out, in, init_std, rng));
  l.bias = ps.Add(name + ".bias", group, Eigen::MatrixXd::Zero(out, 1));
  return l;
}

Eigen::VectorXd Linear::Forward(const ParameterSet& ps, const Eigen::VectorXd& x) const {
  if (x.size() != in) Fail(ErrorKind::kShape, fmt::format("linear: expected {} inputs, got {}", in, x.size()));
  return ps[weight].value * x + ps[bias].value.col(0);
}

Eigen::VectorXd Linear::Backward(ParameterSet& ps, const Eigen::VectorXd& x, const Eigen::VectorXd& dy) const {
  ps[weight].grad.noalias() += dy * x.transpose();
  ps[bias].grad.col(0) += dy;
  return ps[weight].value.transpose() * dy;
}

Conv2d Conv2d::Create(ParameterSet& ps, const std::string& name, ParamGroup group, int in, int out,
                      int kernel, int stride, double init_std, std::mt19937_64& rng) {
  Conv2d c;
  c.in_channels = in;
  c.out_channels = out;
  c.kernel = kernel;
  c.stride = stride;
  c.padding = kernel / 2;
  c.weight = ps.Add(name + ".weight", group, RandomNormal(in * kernel * kernel, out, init_std, rng));
  c.bias = ps.Add(name + ".bias", group, Eigen::MatrixXd::Zero(1, out));
  return c;
}

FeatureMap Conv2d::Forward(const ParameterSet& ps, const FeatureMap& x, Cache* cache) const {
  if (x.channels() != in_channels || x.data.rows() != static_cast<Eigen::Index>(x.height) * x.width) {
    Fail(ErrorKind::kShape, fmt::format("conv: expected {} channels, got {}", in_channels, x.channels()));
  }
  const int ho = OutSize(x.height);
  const int wo = OutSize(x.width);
  if (ho < 1 || wo < 1) Fail(ErrorKind::kShape, "conv: input smaller than the kernel footprint");

  Eigen::MatrixXd cols(static_cast<Eigen::Index>(ho) * wo, in_channels * kernel * kernel);
  for (int c = 0; c < in_channels; ++c) {
    const double* src = x.data.col(c).data();
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        double* dst = cols.col((c * kernel + ky) * kernel + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - padding + ky;
          double* row = dst + static_cast<std::ptrdiff_t>(oy) * wo;
          if (iy < 0 || iy >= x.height) {
            std::fill(row, row + wo, 0.0);
            continue;
          }
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - padding + kx;
            row[ox] = (ix >= 0 && ix < x.width) ? src[iy * x.width + ix] : 0.0;
          }
        }
      }
    }
  }
  FeatureMap y;
  y.height = ho;
  y.width = wo;
  y.data.noalias() = cols * ps[weight].value;
  y.data.rowwise() += ps[bias].value.row(0);
  if (cache != nullptr) {
    cache->cols = std::move(cols);
    cache->in_height = x.height;
    cache->in_width = x.width;
  }
  return y;
}

FeatureMap Conv2d::Backward(ParameterSet& ps, const Cache& cache, const FeatureMap& dy) const {
  ps[weight].grad.noalias() += cache.cols.transpose() * dy.data;
  ps[bias].grad.row(0) += dy.data.colwise().sum();
  const Eigen::MatrixXd dcols = dy.data * ps[weight].value.transpose();

  FeatureMap dx;
  dx.height = cache.in_height;
  dx.width = cache.in_width;
  dx.data = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dx.height) * dx.width, in_channels);
  const int ho = dy.height;
  const int wo = dy.width;
  for (int c = 0; c < in_channels; ++c) {
    double* dst = dx.data.col(c).data();
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const double* src = dcols.col((c * kernel + ky) * kernel + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= dx.height) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - padding + kx;
            if (ix >= 0 && ix < dx.width) dst[iy * dx.width + ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
  return dx;
}

namespace {

Eigen::VectorXd Sigmoid(const Eigen::VectorXd& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

}  // namespace

Lstm Lstm::Create(ParameterSet& ps, const std::string& name, ParamGroup group, int in, int hidden,
                  std::mt19937_64& rng) {
  Lstm l;
  l.in = in;
  l.hidden = hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto uniform = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  };
  l.w_input = ps.Add(name + ".w_input", group, uniform(4 * hidden, in));
  l.w_hidden = ps.Add(name + ".w_hidden", group, uniform(4 * hidden, hidden));
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(4 * hidden, 1);
  b.block(hidden, 0, hidden, 1).setOnes();  // forget gate
  l.bias = ps.Add(name + ".bias", group, std::move(b));
  return l;
}

Eigen::VectorXd Lstm::Forward(const ParameterSet& ps, const Eigen::MatrixXd& seq, bool reverse,
                              Cache* cache) const {
  if (seq.cols() != in) Fail(ErrorKind::kShape, fmt::format("lstm: expected {} features, got {}", in, seq.cols()));
  const int steps = static_cast<int>(seq.rows());
  const int H = hidden;
  const auto& wx = ps[w_input].value;
  const auto& wh = ps[w_hidden].value;
  const auto b = ps[bias].value.col(0);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
  if (cache != nullptr) {
    cache->steps.clear();
    cache->order.clear();
  }
  for (int s = 0; s < steps; ++s) {
    const int t = reverse ? steps - 1 - s : s;
    Step st;
    st.x = seq.row(t).transpose();
    st.h_prev = h;
    st.c_prev = c;
    const Eigen::VectorXd z = wx * st.x + wh * h + b;
    st.i = Sigmoid(z.segment(0, H));
    st.f = Sigmoid(z.segment(H, H));
    st.g = z.segment(2 * H, H).array().tanh().matrix();
    st.o = Sigmoid(z.segment(3 * H, H));
    st.c = st.f.cwiseProduct(c) + st.i.cwiseProduct(st.g);
    st.tanh_c = st.c.array().tanh().matrix();
    h = st.o.cwiseProduct(st.tanh_c);
    c = st.c;
    if (cache != nullptr) {
      cache->steps.push_back(std::move(st));
      cache->order.push_back(t);
    }
  }
  return h;
}

Eigen::MatrixXd Lstm::Backward(ParameterSet& ps, const Cache& cache, const Eigen::VectorXd& dh_final) const {
  const int H = hidden;
  const auto& wx = ps[w_input].value;
  const auto& wh = ps[w_hidden].value;
  Eigen::MatrixXd dseq = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cache.steps.size()), in);
  Eigen::VectorXd dh = dh_final;
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd dz(4 * H);
  for (int s = static_cast<int>(cache.steps.size()) - 1; s >= 0; --s) {
    const Step& st = cache.steps[s];
    const Eigen::ArrayXd d_o = dh.array() * st.tanh_c.array();
    dc.array() += dh.array() * st.o.array() * (1.0 - st.tanh_c.array().square());
    const Eigen::ArrayXd d_i = dc.array() * st.g.array();
    const Eigen::ArrayXd d_g = dc.array() * st.i.array();
    const Eigen::ArrayXd d_f = dc.array() * st.c_prev.array();
    dz.segment(0, H) = (d_i * st.i.array() * (1.0 - st.i.array())).matrix();
    dz.segment(H, H) = (d_f * st.f.array() * (1.0 - st.f.array())).matrix();
    dz.segment(2 * H, H) = (d_g * (1.0 - st.g.array().square())).matrix();
    dz.segment(3 * H, H) = (d_o * st.o.array() * (1.0 - st.o.array())).matrix();
    ps[w_input].grad.noalias() += dz * st.x.transpose();
    ps[w_hidden].grad.noalias() += dz * st.h_prev.transpose();
    ps[bias].grad.col(0) += dz;
    dseq.row(cache.order[s]) = (wx.transpose() * dz).transpose();
    dh = wh.transpose() * dz;
    dc = (dc.array() * st.f.array()).matrix();
  }
  return dseq;
}

double ClipGradNorm(ParameterSet& ps, double max_norm) {
  const double norm = ps.GradNorm();
  if (max_norm > 0.0 && norm > max_norm) ps.ScaleGrad(max_norm / norm);
  return norm;
}

Adam::Adam(const ParameterSet& ps, AdamOptions options) : options_(options) {
  for (const auto& p : ps.params()) {
    m_.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::Step(ParameterSet& ps, double lr) {
  if (m_.size() != ps.size()) Fail(ErrorKind::kShape, "adam: optimizer state does not match parameters");
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[static_cast<int>(i)];
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * p.grad;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + options_.eps);
  }
}

}  // namespace avattn::nn
