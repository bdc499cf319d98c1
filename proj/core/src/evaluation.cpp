// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "avattn/error.hpp"
#include "avattn/nn.hpp"

namespace avattn {
namespace {

ModalityMask Available(const Sample& s, const ModalityMask& requested) {
  return {requested.use_visual && s.has_visual(), requested.use_audio && s.has_audio()};
}

Eigen::MatrixXd NormalizeRows(const Eigen::MatrixXd& m, const char* what) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    Require(n > kMinNorm, ErrorKind::kDegenerateVector, fmt::format("knn: zero-norm {} row {}", what, i));
    out.row(i) /= n;
  }
  return out;
}

/// Rows of `set` usable for `task`, in order.
std::vector<std::size_t> TaskRows(const EmbeddingSet& set, ProbeTask task) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (task != ProbeTask::kZone || set.zones[i]) rows.push_back(i);
  }
  return rows;
}

Eigen::VectorXd SoftmaxLogits(const Eigen::VectorXd& logits) {
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

int Argmax(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

EmbeddingSet ExtractEmbeddings(const AvModel& model, std::span<const Sample> samples, const NormStats& audio_norm,
                               const ModalityMask& mask, ExtractionReport* report) {
  mask.Validate();
  const std::string before = model.BackboneHash();
  EmbeddingSet set;
  std::vector<Eigen::VectorXd> rows;
  std::vector<std::string> skipped;
  for (const auto& s : samples) {
    const ModalityMask m = Available(s, mask);
    if (m != mask) {
      skipped.push_back(s.id);
      continue;
    }
    const ForwardOutput out = model.Forward(MakeModelInput(s, audio_norm), m);
    rows.push_back(out.embedding);
    set.ids.push_back(s.id);
    set.gaze.push_back(s.gt_gaze.value_or(s.gaze));
    set.headpose.push_back(s.headpose);
    set.zones.push_back(s.zone);
    set.modality_used.push_back(m);
  }
  const std::string after = model.BackboneHash();
  Require(before == after, ErrorKind::kValidation, "embedding extraction modified the frozen backbone");
  const int dim = model.config().fused_dim;
  set.embeddings.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) set.embeddings.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  Require(set.embeddings.allFinite(), ErrorKind::kNonFinite, "embedding extraction produced non-finite values");
  if (report) {
    report->skipped = std::move(skipped);
    report->hash_before = before;
    report->hash_after = after;
  }
  return set;
}

std::string_view ToString(ProbeTask task) {
  switch (task) {
    case ProbeTask::kGaze: return "gaze";
    case ProbeTask::kHeadpose: return "headpose";
    case ProbeTask::kZone: return "zone";
  }
  return "?";
}

ProbeTask ParseProbeTask(const std::string& name) {
  if (name == "gaze") return ProbeTask::kGaze;
  if (name == "headpose" || name == "pose") return ProbeTask::kHeadpose;
  if (name == "zone" || name == "zones") return ProbeTask::kZone;
  Fail(ErrorKind::kConfig, "unknown probe task '" + name + "' (expected gaze, headpose or zone)");
}

ProbeResult LinearProbe(const EmbeddingSet& train, const EmbeddingSet& test, ProbeTask task,
                        const ProbeOptions& options) {
  Require(options.epochs >= 0 && options.batch_size > 0 && options.learning_rate > 0.0, ErrorKind::kConfig,
          "probe: epochs, batch size and learning rate must be positive");
  {
    const std::set<std::string> train_ids(train.ids.begin(), train.ids.end());
    for (const auto& id : test.ids) {
      Require(!train_ids.contains(id), ErrorKind::kInvalidInput, "probe: sample " + id + " is in both train and test");
    }
  }
  const std::vector<std::size_t> train_rows = TaskRows(train, task);
  const std::vector<std::size_t> test_rows = TaskRows(test, task);
  Require(!train_rows.empty(), ErrorKind::kInsufficientData, "probe: no training samples carry the task label");
  const Eigen::Index dim = train.embeddings.cols();
  const int out_dim = task == ProbeTask::kGaze ? 3 : task == ProbeTask::kHeadpose ? 6 : kNumZones;

  // Head-pose targets are standardised for fitting and mapped back afterwards.
  Vector6d pose_mean = Vector6d::Zero();
  Vector6d pose_std = Vector6d::Ones();
  if (task == ProbeTask::kZone) {
    std::set<int> classes;
    for (auto i : train_rows) {
      const int z = *train.zones[i];
      Require(z >= 1 && z <= kNumZones, ErrorKind::kInvalidInput, fmt::format("probe: zone label {} outside 1-9", z));
      classes.insert(z);
    }
    Require(classes.size() >= 2, ErrorKind::kDegenerateTask, "probe: zone training set has a single class");
  } else if (task == ProbeTask::kHeadpose) {
    for (auto i : train_rows) pose_mean += train.headpose[i];
    pose_mean /= static_cast<double>(train_rows.size());
    Vector6d var = Vector6d::Zero();
    for (auto i : train_rows) var += (train.headpose[i] - pose_mean).cwiseAbs2();
    pose_std = (var / static_cast<double>(train_rows.size())).cwiseSqrt().cwiseMax(kNormStdFloor);
  }

  nn::ParameterSet ps;
  const int w = ps.Add("probe.weight", nn::ParamGroup::kHeadGaze, Eigen::MatrixXd::Zero(out_dim, dim));
  Eigen::MatrixXd bias0 = Eigen::MatrixXd::Zero(out_dim, 1);
  if (task == ProbeTask::kGaze) bias0.col(0) = kFrontalAxis;
  const int b = ps.Add("probe.bias", nn::ParamGroup::kHeadGaze, bias0);
  nn::Adam adam(ps);
  std::mt19937_64 rng(options.seed);

  std::vector<std::size_t> order = train_rows;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      ps.ZeroGrad();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const Eigen::VectorXd z = train.embeddings.row(static_cast<Eigen::Index>(i)).transpose();
        const Eigen::VectorXd y = ps[w].value * z + ps[b].value.col(0);
        Eigen::VectorXd dy;
        switch (task) {
          case ProbeTask::kGaze: dy = GazeLossGradient(y.head<3>(), train.gaze[i]); break;
          case ProbeTask::kHeadpose: {
            const Vector6d target = (train.headpose[i] - pose_mean).cwiseQuotient(pose_std);
            dy = HeadposeLossGradient(y.head<6>(), target);
            break;
          }
          case ProbeTask::kZone: {
            dy = SoftmaxLogits(y);
            dy[*train.zones[i] - 1] -= 1.0;
            break;
          }
        }
        dy *= inv_b;
        ps[w].grad.noalias() += dy * z.transpose();
        ps[b].grad.col(0) += dy;
      }
      adam.Step(ps, options.learning_rate);
    }
  }

  ProbeResult result;
  result.head.task = task;
  result.head.weight = ps[w].value;
  result.head.bias = ps[b].value.col(0);
  if (task == ProbeTask::kHeadpose) {
    result.head.weight = pose_std.asDiagonal() * result.head.weight;
    result.head.bias = pose_std.cwiseProduct(result.head.bias) + pose_mean;
  }
  result.test_outputs.resize(static_cast<Eigen::Index>(test_rows.size()), out_dim);
  double metric = 0.0;
  for (std::size_t r = 0; r < test_rows.size(); ++r) {
    const std::size_t i = test_rows[r];
    const Eigen::VectorXd y = result.head.Apply(test.embeddings.row(static_cast<Eigen::Index>(i)).transpose());
    result.test_outputs.row(static_cast<Eigen::Index>(r)) = y.transpose();
    result.test_ids.push_back(test.ids[i]);
    switch (task) {
      case ProbeTask::kGaze: metric += AngularErrorDeg(y.head<3>(), test.gaze[i]); break;
      case ProbeTask::kHeadpose: metric += HeadposeLoss(y.head<6>(), test.headpose[i]); break;
      case ProbeTask::kZone: metric += (Argmax(y) + 1 == *test.zones[i]) ? 100.0 : 0.0; break;
    }
  }
  result.metric = test_rows.empty() ? 0.0 : metric / static_cast<double>(test_rows.size());
  return result;
}

KnnResult WeightedKnn(const Eigen::MatrixXd& train, std::span<const int> train_labels, const Eigen::MatrixXd& test,
                      std::span<const int> test_labels, const KnnOptions& options) {
  Require(train.rows() > 0, ErrorKind::kInsufficientData, "knn: empty training set");
  Require(static_cast<std::size_t>(train.rows()) == train_labels.size(), ErrorKind::kShape,
          "knn: training rows and labels differ in count");
  Require(test_labels.empty() || static_cast<std::size_t>(test.rows()) == test_labels.size(), ErrorKind::kShape,
          "knn: test rows and labels differ in count");
  Require(train.cols() == test.cols(), ErrorKind::kShape, "knn: embedding dimensions differ");
  Require(options.k > 0 && options.temperature > 0.0, ErrorKind::kConfig, "knn: k and temperature must be positive");
  const Eigen::MatrixXd a = NormalizeRows(train, "train");
  const Eigen::MatrixXd q = NormalizeRows(test, "test");
  const std::size_t n = train_labels.size();
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(options.k), n);

  KnnResult result;
  std::vector<std::size_t> idx(n);
  int correct = 0;
  for (Eigen::Index t = 0; t < q.rows(); ++t) {
    const Eigen::VectorXd sims = a * q.row(t).transpose();
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t l, std::size_t r) {
                        return sims[static_cast<Eigen::Index>(l)] > sims[static_cast<Eigen::Index>(r)] ||
                               (sims[static_cast<Eigen::Index>(l)] == sims[static_cast<Eigen::Index>(r)] && l < r);
                      });
    std::map<int, double> scores;
    for (std::size_t j = 0; j < k; ++j) {
      const double s = sims[static_cast<Eigen::Index>(idx[j])];
      scores[train_labels[idx[j]]] += options.uniform_weights ? 1.0 : std::exp(s / options.temperature);
    }
    int best = scores.begin()->first;
    double best_score = scores.begin()->second;
    for (const auto& [label, score] : scores) {
      if (score > best_score) {
        best = label;
        best_score = score;
      }
    }
    result.predictions.push_back(best);
    if (!test_labels.empty() && best == test_labels[static_cast<std::size_t>(t)]) ++correct;
  }
  if (!test_labels.empty() && q.rows() > 0) result.accuracy = 100.0 * correct / static_cast<double>(q.rows());
  return result;
}

KnnResult WeightedKnn(const EmbeddingSet& train, const EmbeddingSet& test, const KnnOptions& options) {
  auto gather = [](const EmbeddingSet& set, std::vector<int>& labels) {
    const std::vector<std::size_t> rows = TaskRows(set, ProbeTask::kZone);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), set.embeddings.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      m.row(static_cast<Eigen::Index>(r)) = set.embeddings.row(static_cast<Eigen::Index>(rows[r]));
      labels.push_back(*set.zones[rows[r]]);
    }
    return m;
  };
  std::vector<int> train_labels;
  std::vector<int> test_labels;
  const Eigen::MatrixXd a = gather(train, train_labels);
  const Eigen::MatrixXd q = gather(test, test_labels);
  return WeightedKnn(a, train_labels, q, test_labels, options);
}

GazeMetrics ComputeGazeMetrics(std::span<const Eigen::Vector3d> preds, std::span<const Eigen::Vector3d> gts) {
  Require(preds.size() == gts.size(), ErrorKind::kShape,
          fmt::format("gaze metrics: {} predictions for {} labels", preds.size(), gts.size()));
  Require(!gts.empty(), ErrorKind::kInsufficientData, "gaze metrics: no samples");
  const std::vector<bool> front = FrontalMask(gts, 90.0);
  const std::vector<bool> facing = FrontalMask(gts, 20.0);
  GazeMetrics m;
  double sum_all = 0.0;
  double sum_front = 0.0;
  double sum_facing = 0.0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const double e = AngularErrorDeg(preds[i], gts[i]);
    sum_all += e;
    if (front[i]) {
      sum_front += e;
      ++m.n_front_180;
    }
    if (facing[i]) {
      sum_facing += e;
      ++m.n_front_facing;
    }
  }
  m.n_all = gts.size();
  m.all = sum_all / static_cast<double>(m.n_all);
  if (m.n_front_180 > 0) m.front_180 = sum_front / static_cast<double>(m.n_front_180);
  if (m.n_front_facing > 0) m.front_facing = sum_facing / static_cast<double>(m.n_front_facing);
  return m;
}

std::vector<AblationRow> AblationRows() {
  auto row = [](std::string name, bool pg, bool hp, bool audio, bool visual) {
    AblationRow r;
    r.name = std::move(name);
    r.pseudo_gaze = pg;
    r.headpose = hp;
    r.audio = audio;
    r.visual = visual;
    return r;
  };
  return {
      row("PG", true, false, false, true),
      row("HP", false, true, false, true),
      row("Audio", true, true, true, false),
      row("PG+HP", true, true, false, true),
      row("PG+HP+Audio", true, true, true, true),
  };
}

std::vector<AblationRow> RunAblationGrid(const ModelConfig& model_config, const TrainConfig& base,
                                         std::span<const Sample> samples, const AblationOptions& options) {
  std::vector<AblationRow> rows = AblationRows();
  const std::vector<Sample> train_split = SelectSplit(samples, Split::kTrain);
  const std::vector<Sample> test_split = SelectSplit(samples, Split::kTest);
  for (auto& row : rows) {
    try {
      TrainConfig cfg = base;
      cfg.use_gaze_loss = row.pseudo_gaze;
      cfg.use_headpose_loss = row.headpose;
      const ModalityMask mask{row.visual, row.audio};
      if (!(row.visual && row.audio)) cfg.fixed_mask = mask;
      TrainOptions topt;
      if (!options.out_dir.empty()) {
        std::string slug = row.name;
        std::ranges::replace(slug, '+', '_');
        topt.out_dir = options.out_dir / slug;
      }
      topt.progress = options.progress;
      topt.fbank = options.fbank;
      topt.label_norm = options.label_norm;
      if (options.progress) *options.progress << fmt::format("ablation cell {}\n", row.name);
      const TrainResult trained = Train(model_config, cfg, samples, topt);
      const Checkpoint& ck = trained.checkpoint;
      const EmbeddingSet train_set = ExtractEmbeddings(ck.model, train_split, ck.audio_norm, mask);
      const EmbeddingSet test_set = ExtractEmbeddings(ck.model, test_split, ck.audio_norm, mask);
      const ProbeResult probe = LinearProbe(train_set, test_set, ProbeTask::kGaze, options.probe);
      std::vector<Eigen::Vector3d> preds;
      for (Eigen::Index i = 0; i < probe.test_outputs.rows(); ++i) {
        preds.emplace_back(probe.test_outputs.row(i).head<3>().transpose());
      }
      row.gaze = ComputeGazeMetrics(preds, test_set.gaze);
      row.backbone_hash = ck.model.BackboneHash();
    } catch (const std::exception& e) {
      row.error = e.what();
      if (options.progress) *options.progress << fmt::format("ablation cell {} failed: {}\n", row.name, e.what());
    }
  }
  return rows;
}

}  // namespace avattn
