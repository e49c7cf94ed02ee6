#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "rvmaudit/checkpoint.hpp"
#include "rvmaudit/model.hpp"
#include "rvmaudit/train.hpp"
#include "support.hpp"

using namespace rvm;

namespace {

ArchDescriptor small_arch() {
  ArchDescriptor a;
  a.input_size = 8;
  a.channels = {3, 4};
  return a;
}

std::vector<Sample> random_batch(Rng& rng, int n, int side) {
  std::vector<Sample> b(n, Sample(static_cast<std::size_t>(side) * side));
  for (auto& s : b)
    for (auto& v : s) v = rng.uniform();
  return b;
}

// A 4x4 square at a random position: bright for label 1, dim for label 0.
Dataset toy_set(Rng& rng, int n, int side) {
  Dataset d;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    GrayImage img(side, side);
    const int x0 = rng.uniform_int(0, side - 4);
    const int y0 = rng.uniform_int(0, side - 4);
    for (int y = y0; y < y0 + 4; ++y)
      for (int x = x0; x < x0 + 4; ++x) img.at(x, y) = label ? 255 : 90;
    d.images.push_back(img);
    d.labels.push_back(label);
  }
  return d;
}

// Dataset where one label has a bright image and the other a black one.
Dataset brightness_set(int n, int side) {
  Dataset d;
  for (int i = 0; i < n; ++i) {
    d.images.emplace_back(side, side, static_cast<Piv>(i % 2 ? 200 : 0));
    d.labels.push_back(i % 2);
  }
  return d;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.input_size = 16;
  c.channels = {4, 8};
  c.batch_size = 8;
  c.max_epochs = 12;
  c.patience = 12;
  c.optimizer = OptimizerKind::Adam;
  c.adam_lr = 0.01;
  c.augment = {0.0, 0.0, 0.0, 0};
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Model, LayoutAndCount) {
  const auto a = small_arch();
  const auto l = parameter_layout(a);
  ASSERT_EQ(l.size(), 6u);
  EXPECT_EQ(l[0].size, 3u * 1 * 9);
  EXPECT_EQ(l[2].size, 4u * 3 * 9);
  EXPECT_EQ(l[4].name, "fc.weight");
  EXPECT_EQ(parameter_count(a), 27u + 3 + 108 + 4 + 4 + 1);
}

TEST(Model, DescriptorRoundTripAndErrors) {
  const auto a = small_arch();
  EXPECT_EQ(ArchDescriptor::parse(a.to_text()), a);
  EXPECT_THROW(ArchDescriptor::parse("mlp/v1 input=8"), ShapeError);
  EXPECT_THROW(ArchDescriptor::parse("cnn/v1 input=8 kernel=3 pool=2"), ShapeError);
  ArchDescriptor tiny = a;
  tiny.input_size = 2;
  EXPECT_THROW(tiny.validate(), ShapeError);
  tiny = a;
  tiny.kernel = 4;
  EXPECT_THROW(tiny.validate(), ShapeError);
}

TEST(Model, InitIsDeterministicAndBounded) {
  const auto a = small_arch();
  const auto p = build_model(a, 5);
  EXPECT_EQ(p.values, build_model(a, 5).values);
  EXPECT_NE(p.values, build_model(a, 6).values);
  const auto l = parameter_layout(a);
  for (std::size_t j = 0; j < l[0].size; ++j) EXPECT_LE(std::abs(p.values[l[0].offset + j]), std::sqrt(6.0 / 9));
  for (std::size_t j = 0; j < l[1].size; ++j) EXPECT_EQ(p.values[l[1].offset + j], 0.0);
}

TEST(Model, ForwardMatchesNaiveLoops) {
  Rng rng(1);
  const auto a = small_arch();
  for (int i = 0; i < 5; ++i) {
    const auto p = build_model(a, i);
    const auto batch = random_batch(rng, 3, a.input_size);
    const auto z = logits(p, batch);
    for (std::size_t k = 0; k < batch.size(); ++k)
      EXPECT_NEAR(z[k], static_cast<double>(oracle::naive_logit(a, p.values, batch[k])), 1e-12);
  }
}

TEST(Model, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  ArchDescriptor a = small_arch();
  for (int i = 0; i < 4; ++i) {
    auto p = build_model(a, 100 + i);
    for (auto& v : p.values) v += rng.normal(0.0, 0.05);  // non-zero biases too
    const auto batch = random_batch(rng, 3, a.input_size);
    const std::vector<int> labels = {1, 0, static_cast<int>(rng.below(2))};
    const auto lg = loss_and_grad(p, batch, labels);
    EXPECT_NEAR(lg.loss, static_cast<double>(oracle::naive_loss(a, p.values, batch, labels)), 1e-12);
    EXPECT_LT(oracle::gradient_check(a, p.values, lg.grad.values, batch, labels), 1e-5) << "draw " << i;
  }
}

TEST(Model, GradientCheckDetectsCorruptedEntry) {
  Rng rng(4);
  const auto a = small_arch();
  auto p = build_model(a, 7);
  for (auto& v : p.values) v += rng.normal(0.0, 0.05);
  const auto batch = random_batch(rng, 3, a.input_size);
  const std::vector<int> labels = {1, 0, 1};
  auto lg = loss_and_grad(p, batch, labels);
  const auto fc_bias = p.values.size() - 1;
  lg.grad.values[fc_bias] *= 1.01;
  EXPECT_GT(oracle::gradient_check(a, p.values, lg.grad.values, batch, labels), 5e-3);
}

TEST(Model, ClassWeightsScaleLossLinearly) {
  Rng rng(3);
  const auto a = small_arch();
  const auto p = build_model(a, 1);
  const auto batch = random_batch(rng, 4, a.input_size);
  const std::vector<int> labels = {1, 1, 0, 0};
  const auto base = loss_and_grad(p, batch, labels);
  const auto doubled = loss_and_grad(p, batch, labels, {2.0, 2.0});
  EXPECT_NEAR(doubled.loss, 2 * base.loss, 1e-12);
  for (std::size_t i = 0; i < base.grad.values.size(); ++i)
    EXPECT_NEAR(doubled.grad.values[i], 2 * base.grad.values[i], 1e-12);
}

TEST(Model, RejectsBadBatches) {
  const auto a = small_arch();
  const auto p = build_model(a, 1);
  const std::vector<Sample> wrong(1, Sample(10));
  const std::vector<int> one = {1};
  EXPECT_THROW(loss_and_grad(p, wrong, one), ShapeError);
  const std::vector<Sample> ok(2, Sample(64));
  EXPECT_THROW(loss_and_grad(p, ok, one), ShapeError);
  const std::vector<int> bad = {1, 2};
  EXPECT_THROW(loss_and_grad(p, ok, bad), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto dir = oracle::scratch_dir("ckpt");
  const auto p = build_model(small_arch(), 9);
  save_checkpoint(p, dir / "m.ckpt");
  const auto q = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(q.arch, p.arch);
  EXPECT_EQ(q.values, p.values);
  EXPECT_EQ(encode_checkpoint(q), encode_checkpoint(p));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto p = build_model(small_arch(), 9);
  const auto bytes = encode_checkpoint(p);
  EXPECT_THROW(decode_checkpoint("GIF89a"), CheckpointError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  auto version = bytes;
  version[8] = 9;
  EXPECT_THROW(decode_checkpoint(version), CheckpointError);
  auto nan = bytes;
  const double qnan = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(nan.data() + nan.size() - 8, &qnan, 8);
  EXPECT_THROW(decode_checkpoint(nan), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/m.ckpt"), CheckpointError);
}

TEST(Train, LearnsSeparableToySet) {
  Rng rng(4);
  const auto cfg = toy_config();
  const auto train_set = toy_set(rng, 64, 16);
  const auto val_set = toy_set(rng, 32, 16);
  const auto r = train(train_set, val_set, cfg);
  ASSERT_GE(r.report.epochs.size(), 3u);
  EXPECT_LT(r.report.epochs[1].train_loss, r.report.epochs[0].train_loss);
  EXPECT_LT(r.report.epochs[2].train_loss, r.report.epochs[1].train_loss);
  const auto& best = r.report.epochs[r.report.best_epoch - 1];
  EXPECT_EQ(best.val_auc_roc, 1.0);
}

TEST(Train, BitReproducible) {
  Rng rng(5);
  auto cfg = toy_config();
  cfg.max_epochs = 3;
  cfg.patience = 3;
  cfg.augment = {};
  const auto tr = toy_set(rng, 24, 16);
  const auto va = toy_set(rng, 12, 16);
  const auto a = train(tr, va, cfg);
  const auto b = train(tr, va, cfg);
  EXPECT_EQ(a.params.values, b.params.values);
  EXPECT_EQ(a.report, b.report);
  cfg.seed = 4;
  EXPECT_NE(train(tr, va, cfg).params.values, a.params.values);
}

TEST(Train, PatienceStopsAfterStaleEpochs) {
  // A vanishing learning rate never improves the validation loss after epoch 1.
  Rng rng(6);
  auto cfg = toy_config();
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.lr = 1e-300;
  cfg.max_epochs = 10;
  const auto tr = toy_set(rng, 8, 16);
  for (int patience : {0, 1, 3}) {
    cfg.patience = patience;
    const auto r = train(tr, tr, cfg);
    EXPECT_EQ(r.report.best_epoch, 1);
    EXPECT_EQ(r.report.stop_reason, StopReason::EarlyStop);
    EXPECT_EQ(static_cast<int>(r.report.epochs.size()), 1 + std::max(1, patience));
  }
  cfg.patience = 10;
  EXPECT_EQ(train(tr, tr, cfg).report.stop_reason, StopReason::MaxEpochs);
}

TEST(Train, BestEpochSnapshotIsReturned) {
  Rng rng(7);
  auto cfg = toy_config();
  cfg.max_epochs = 6;
  cfg.patience = 6;
  const auto tr = toy_set(rng, 32, 16);
  const auto va = toy_set(rng, 16, 16);
  const auto r = train(tr, va, cfg);
  std::vector<Sample> vs;
  for (const auto& img : va.images) vs.push_back(to_sample(img));
  const auto [loss, auc] = evaluate(r.params, vs, va.labels);
  EXPECT_EQ(loss, r.report.epochs[r.report.best_epoch - 1].val_loss);
  double min_loss = 1e300;
  for (const auto& e : r.report.epochs) min_loss = std::min(min_loss, e.val_loss);
  EXPECT_EQ(loss, min_loss);
}

TEST(Train, WeightedSamplingBalancesClasses) {
  Dataset d = brightness_set(40, 4);
  // Make the set 1:9 imbalanced.
  for (std::size_t i = 0; i < d.size(); ++i) d.labels[i] = i % 10 == 0 ? 1 : 0;
  Rng rng(8);
  std::size_t pos = 0;
  std::size_t total = 0;
  for (int e = 0; e < 200; ++e) {
    const auto order = train_detail::epoch_order(d, true, rng);
    EXPECT_EQ(order.size(), d.size());
    for (auto i : order) pos += d.labels[i];
    total += order.size();
  }
  EXPECT_NEAR(static_cast<double>(pos) / total, 0.5, 0.02);
  const auto perm = train_detail::epoch_order(d, false, rng);
  auto sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Train, ValidatesInputs) {
  auto cfg = toy_config();
  const auto d = brightness_set(8, 16);
  Dataset one_class = d;
  for (auto& l : one_class.labels) l = 0;
  EXPECT_THROW(train(one_class, d, cfg), Error);
  EXPECT_THROW(train(Dataset{}, d, cfg), Error);
  EXPECT_THROW(train(brightness_set(8, 12), d, cfg), ShapeError);
  cfg.patience = cfg.max_epochs + 1;
  EXPECT_THROW(train(d, d, cfg), Error);
}

TEST(Train, ReportCsvHasOneRowPerEpoch) {
  TrainReport r;
  r.epochs = {{1, 0.7, 0.69, 0.5}, {2, 0.6, 0.65, 0.75}};
  std::ostringstream out;
  write_train_report_csv(r, out);
  const auto text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,train_loss,val_loss,val_auc_roc");
}
