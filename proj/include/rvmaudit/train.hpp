#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "rvmaudit/metrics.hpp"
#include "rvmaudit/model.hpp"
#include "rvmaudit/transforms.hpp"

namespace rvm {

enum class OptimizerKind { Sgd, Adam };
enum class SelectOn { Loss, AucRoc };
enum class StopReason { MaxEpochs, EarlyStop };

inline const char* to_string(StopReason r) {
  return r == StopReason::MaxEpochs ? "max_epochs" : "early_stop";
}

struct TrainConfig {
  int batch_size = 64;
  double lr = 0.001;
  int max_epochs = 10;
  int patience = 5;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double adam_lr = 0.0001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool weighted_sampling = false;
  int input_size = 224;
  std::vector<int> channels = {8, 16, 32, 64};
  SelectOn select_on = SelectOn::Loss;
  AugmentSpec augment{};
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (!(lr > 0.0)) throw Error("lr must be > 0");
    if (!(adam_lr > 0.0)) throw Error("adam_lr must be > 0");
    if (max_epochs < 1) throw Error("max_epochs must be >= 1");
    if (patience < 0 || patience > max_epochs) throw Error("patience must lie in [0, max_epochs]");
    augment.validate();
    arch().validate();
  }

  [[nodiscard]] ArchDescriptor arch() const {
    ArchDescriptor a;
    a.input_size = input_size;
    a.channels = channels;
    return a;
  }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auc_roc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based index into epochs
  StopReason stop_reason = StopReason::MaxEpochs;

  friend bool operator==(const TrainReport& a, const TrainReport& b) {
    if (a.best_epoch != b.best_epoch || a.stop_reason != b.stop_reason ||
        a.epochs.size() != b.epochs.size())
      return false;
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
      const auto& x = a.epochs[i];
      const auto& y = b.epochs[i];
      if (x.epoch != y.epoch || !same(x.train_loss, y.train_loss) ||
          !same(x.val_loss, y.val_loss) || !same(x.val_auc_roc, y.val_auc_roc))
        return false;
    }
    return true;
  }
};

inline void write_train_report_csv(const TrainReport& r, std::ostream& out) {
  out << "epoch,train_loss,val_loss,val_auc_roc\n";
  out.precision(17);
  for (const auto& e : r.epochs)
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_auc_roc << '\n';
}

/// Labelled images already at the model's input size.
struct Dataset {
  std::vector<GrayImage> images;
  std::vector<int> labels;

  [[nodiscard]] std::size_t size() const { return images.size(); }
  [[nodiscard]] std::size_t count(int label) const {
    std::size_t n = 0;
    for (int l : labels) n += (l == label);
    return n;
  }
};

struct TrainResult {
  ClassifierParams params;
  TrainReport report;
};

namespace train_detail {

class Optimizer {
public:
  Optimizer(const TrainConfig& cfg, std::size_t n) : cfg_(cfg) {
    if (cfg.optimizer == OptimizerKind::Adam) {
      m_.assign(n, 0.0);
      v_.assign(n, 0.0);
    }
  }

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg_.lr * grad[i];
      return;
    }
    ++t_;
    const double b1 = cfg_.adam_beta1;
    const double b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, t_);
    const double c2 = 1.0 - std::pow(b2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      params[i] -= cfg_.adam_lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
    }
  }

private:
  const TrainConfig& cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  long long t_ = 0;
};

// Indices for one epoch: a shuffled permutation, or with weighted sampling
// n draws with replacement where each class is picked with equal total mass.
inline std::vector<std::size_t> epoch_order(const Dataset& d, bool weighted, Rng& rng) {
  const std::size_t n = d.size();
  std::vector<std::size_t> order;
  order.reserve(n);
  if (!weighted) {
    for (std::size_t i = 0; i < n; ++i) order.push_back(i);
    rng.shuffle(order);
    return order;
  }
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < n; ++i) by_class[d.labels[i]].push_back(i);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = rng.bernoulli(0.5) ? 1 : 0;
    const auto& pool = by_class[c];
    order.push_back(pool[rng.below(pool.size())]);
  }
  return order;
}

}  // namespace train_detail

/// Mean unweighted BCE and AUC-ROC (NaN when single-class) on a fixed set.
inline std::pair<double, double> evaluate(const ClassifierParams& params,
                                          const std::vector<Sample>& samples,
                                          const std::vector<int>& labels) {
  const auto z = logits(params, samples);
  double loss = 0.0;
  PredictionSet preds;
  preds.reserve(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    loss += softplus(z[i]) - labels[i] * z[i];
    preds.push_back({"", "", labels[i], sigmoid(z[i])});
  }
  loss /= static_cast<double>(z.size());
  bool both = false;
  for (int l : labels) both |= (l != labels.front());
  const double auc = both ? auc_roc(preds) : std::numeric_limits<double>::quiet_NaN();
  return {loss, auc};
}

/// Mini-batch training with per-epoch validation and early stopping.
///
/// Training halts once `patience` consecutive epochs (at least one) fail to
/// strictly improve the selection metric, or after max_epochs. The returned
/// parameters are the snapshot from the best epoch.
inline TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0) throw Error("training partition is empty");
  if (val_set.size() == 0) throw Error("validation partition is empty");
  if (train_set.count(0) == 0 || train_set.count(1) == 0)
    throw Error("training partition must contain both classes");
  for (const auto* d : {&train_set, &val_set})
    for (const auto& img : d->images)
      if (img.width != cfg.input_size || img.height != cfg.input_size)
        throw ShapeError("dataset images must be " + std::to_string(cfg.input_size) + "x" +
                         std::to_string(cfg.input_size));

  ClassifierParams params = build_model(cfg.arch(), derive_seed(cfg.seed, 1));
  Rng order_rng(derive_seed(cfg.seed, 2));
  Rng aug_rng(derive_seed(cfg.seed, 3));
  train_detail::Optimizer opt(cfg, params.values.size());

  std::vector<Sample> val_samples;
  val_samples.reserve(val_set.size());
  for (const auto& img : val_set.images) val_samples.push_back(to_sample(img));

  TrainResult result{params, {}};
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  const int allowed_stale = std::max(1, cfg.patience);

  std::vector<Sample> batch;
  std::vector<int> batch_labels;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = train_detail::epoch_order(train_set, cfg.weighted_sampling, order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(to_sample(augment(train_set.images[order[i]], cfg.augment, aug_rng)));
        batch_labels.push_back(train_set.labels[order[i]]);
      }
      auto lg = loss_and_grad(params, batch, batch_labels);
      loss_sum += lg.loss * static_cast<double>(end - start);
      opt.step(params.values, lg.grad.values);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    std::tie(rec.val_loss, rec.val_auc_roc) = evaluate(params, val_samples, val_set.labels);
    result.report.epochs.push_back(rec);

    // Lower is better for both criteria (AUC is negated; NaN never improves).
    const double score = cfg.select_on == SelectOn::Loss ? rec.val_loss : -rec.val_auc_roc;
    if (score < best) {
      best = score;
      stale = 0;
      result.params = params;
      result.report.best_epoch = epoch;
    } else if (++stale >= allowed_stale) {
      result.report.stop_reason = StopReason::EarlyStop;
      break;
    }
  }
  if (result.report.best_epoch == 0) {
    // Selection metric was NaN throughout; keep the final parameters.
    result.params = params;
    result.report.best_epoch = static_cast<int>(result.report.epochs.size());
  }
  return result;
}

}  // namespace rvm
