#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>

#include "gazehta/harness.hpp"
#include "testutil.hpp"

using namespace gazehta;
using testutil::TempDir;

namespace {

// Closed form of the schedule, written independently of the library.
double reference_lr(double t, long total, double max_lr) {
  const double peak = 0.3 * total, last = total - 1.0;
  const double lo = max_lr / 25.0, fin = max_lr / 1e4;
  if (t <= peak) return lo + (max_lr - lo) * (1.0 - std::cos(std::numbers::pi * t / peak)) / 2.0;
  return fin + (max_lr - fin) * (1.0 + std::cos(std::numbers::pi * (t - peak) / (last - peak))) / 2.0;
}

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

Dataset tiny_dataset(std::size_t n, std::uint64_t seed) {
  SynthConfig sc;
  sc.image_size = 32;
  sc.snap_grid = 16;
  sc.rng_seed = seed;
  return make_synthetic_dataset(sc, n);
}

TrainConfig tiny_train(int epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 4;
  tc.max_lr = 3e-3;
  tc.seed = 5;
  return tc;
}

}  // namespace

TEST(Schedule, Endpoints) {
  const double max_lr = 1e-3;
  EXPECT_DOUBLE_EQ(one_cycle_lr(0, 1000, max_lr), max_lr / 25.0);
  EXPECT_EQ(one_cycle_lr(300, 1000, max_lr), max_lr);
  EXPECT_EQ(one_cycle_lr(3, 10, max_lr), max_lr);
  EXPECT_LE(one_cycle_lr(999, 1000, max_lr), max_lr / 1e3);
  EXPECT_NEAR(one_cycle_lr(999, 1000, max_lr), max_lr / 1e4, 1e-18);
}

TEST(Schedule, MatchesClosedForm) {
  for (long total : {7L, 100L, 2000L})
    for (long s = 0; s < total; ++s) ASSERT_NEAR(one_cycle_lr(s, total, 2e-3), reference_lr(s, total, 2e-3), 1e-12);
}

TEST(Schedule, IntegralMatchesClosedForm) {
  const long total = 1000;
  const double max_lr = 1.0;
  const double peak = 0.3 * total, last = total - 1.0;
  // A half cosine period averages the two endpoints.
  const double expected = peak * (max_lr / 25.0 + max_lr) / 2.0 + (last - peak) * (max_lr + max_lr / 1e4) / 2.0;
  auto f = [&](double t) { return one_cycle_lr_at(t, total, max_lr); };
  const double got = simpson(f, 0.0, peak, 20000) + simpson(f, peak, last, 20000);
  EXPECT_NEAR(got, expected, 1e-12 * expected);
}

TEST(Schedule, MonotoneAroundPeak) {
  const long total = 500;
  for (long s = 1; s < total; ++s) {
    const double a = one_cycle_lr(s - 1, total, 1e-3), b = one_cycle_lr(s, total, 1e-3);
    if (s <= 150)
      ASSERT_GT(b, a);
    else
      ASSERT_LT(b, a);
  }
}

TEST(Schedule, RejectsOutOfRange) {
  EXPECT_THROW(one_cycle_lr(-1, 10, 1e-3), InvalidArgument);
  EXPECT_THROW(one_cycle_lr(10, 10, 1e-3), InvalidArgument);
  EXPECT_THROW(one_cycle_lr(0, 10, 0.0), InvalidArgument);
}

TEST(AdamW, ZeroGradientWithoutDecayKeepsParameters) {
  nn::Buffer<float> p{1.0f, -2.0f, 0.5f};
  const auto keep = p;
  AdamW opt(3);
  for (int i = 0; i < 5; ++i) opt.step(p, nn::Buffer<float>(3, 0.0f), 1e-2, 0.0);
  EXPECT_EQ(p, keep);
}

TEST(AdamW, ZeroLearningRateKeepsParameters) {
  nn::Buffer<float> p{1.0f, -2.0f, 0.5f};
  const auto keep = p;
  AdamW opt(3);
  for (int i = 0; i < 5; ++i) opt.step(p, nn::Buffer<float>{0.3f, -1.0f, 2.0f}, 0.0, 0.5);
  EXPECT_EQ(p, keep);
}

TEST(AdamW, MatchesReferenceUpdate) {
  nn::Buffer<float> p{0.5f, -1.5f};
  AdamW opt(2);
  double m[2] = {0, 0}, v[2] = {0, 0}, q[2] = {0.5, -1.5};
  const double lr = 0.01, wd = 0.1;
  for (int t = 1; t <= 20; ++t) {
    const nn::Buffer<float> g{static_cast<float>(std::sin(t)), static_cast<float>(0.1 * t)};
    opt.step(p, g, lr, wd);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      q[i] -= lr * (mh / (std::sqrt(vh) + 1e-8) + wd * q[i]);
    }
  }
  EXPECT_NEAR(p[0], q[0], 1e-5);
  EXPECT_NEAR(p[1], q[1], 1e-5);
  EXPECT_EQ(opt.steps(), 20);
}

TEST(AdamW, DecayIsDecoupledFromGradientScale) {
  nn::Buffer<float> p{2.0f};
  AdamW opt(1);
  opt.step(p, nn::Buffer<float>{0.0f}, 0.1, 0.5);
  EXPECT_FLOAT_EQ(p[0], 2.0f - 0.1f * 0.5f * 2.0f);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.max_lr = 0.0;
  EXPECT_THROW(validate(c), InvalidArgument);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(validate(c), InvalidArgument);
}

TEST(Checkpoint, RoundTrip) {
  TempDir dir;
  const Dataset ds = tiny_dataset(8, 1);
  const auto r = train(ModelConfig::preset("tiny"), tiny_train(1), ds);
  save_checkpoint(r.checkpoint, dir / "a.ckpt");
  EXPECT_FALSE(std::filesystem::exists(dir / "a.ckpt.tmp"));
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.model, r.checkpoint.model);
  EXPECT_EQ(back.params, r.checkpoint.params);
  EXPECT_EQ(back.adam_m, r.checkpoint.adam_m);
  EXPECT_EQ(back.adam_v, r.checkpoint.adam_v);
  EXPECT_EQ(back.adam_steps, 2);
  EXPECT_EQ(back.epochs_done, 1);
  EXPECT_EQ(back.global_step, 2);
  EXPECT_EQ(back.rng_state, r.checkpoint.rng_state);
  EXPECT_EQ(back.train_config, r.checkpoint.train_config);
  EXPECT_EQ(network_from_checkpoint(back).params().values, back.params);
}

TEST(Checkpoint, RejectsForeignOrNewerFiles) {
  TempDir dir;
  testutil::write_text(dir / "junk.ckpt", "not a checkpoint at all");
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), VersionError);

  const auto r = train(ModelConfig::preset("tiny"), tiny_train(1), tiny_dataset(4, 2));
  save_checkpoint(r.checkpoint, dir / "a.ckpt");
  std::string bytes = testutil::read_text(dir / "a.ckpt");
  bytes[8] = 2;  // format version field
  testutil::write_text(dir / "v2.ckpt", bytes);
  EXPECT_THROW(load_checkpoint(dir / "v2.ckpt"), VersionError);
  bytes[8] = 1;
  testutil::write_text(dir / "short.ckpt", bytes.substr(0, 40));
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), VersionError);
  testutil::write_text(dir / "short2.ckpt", bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW(load_checkpoint(dir / "short2.ckpt"), VersionError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), std::runtime_error);
}

TEST(Checkpoint, LayoutMismatchIsVersionError) {
  const auto r = train(ModelConfig::preset("tiny"), tiny_train(1), tiny_dataset(4, 3));
  Checkpoint ck = r.checkpoint;
  ck.model.proposal_hidden += 1;
  EXPECT_THROW(network_from_checkpoint(ck), VersionError);
}

TEST(Training, LossHalvesWithinTwoHundredSteps) {
  const Dataset ds = tiny_dataset(32, 4);
  const auto r = train(ModelConfig::preset("tiny"), tiny_train(25), ds);  // 8 steps per epoch
  ASSERT_EQ(r.log.size(), 200u);
  EXPECT_LE(r.log.back().loss.total, 0.5 * r.log.front().loss.total);
}

TEST(Training, SeededRunsAreIdentical) {
  const Dataset ds = tiny_dataset(12, 5);
  const auto a = train(ModelConfig::preset("tiny"), tiny_train(3), ds);
  const auto b = train(ModelConfig::preset("tiny"), tiny_train(3), ds);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) ASSERT_EQ(csv_row(a.log[i]), csv_row(b.log[i]));
  EXPECT_EQ(a.checkpoint.params, b.checkpoint.params);
}

TEST(Training, ResumeContinuesTheSameRun) {
  const Dataset ds = tiny_dataset(12, 6);
  const ModelConfig mc = ModelConfig::preset("tiny");
  std::optional<Checkpoint> at2;
  TrainHooks hooks;
  hooks.on_epoch = [&](const Checkpoint& ck) {
    if (ck.epochs_done == 2) at2 = ck;
    return true;
  };
  const auto full = train(mc, tiny_train(5), ds, hooks);
  ASSERT_TRUE(at2);
  TempDir dir;
  save_checkpoint(*at2, dir / "e2.ckpt");
  const Checkpoint loaded = load_checkpoint(dir / "e2.ckpt");
  const auto rest = train(mc, tiny_train(5), ds, {}, &loaded);
  ASSERT_EQ(rest.log.size(), full.log.size() - at2->global_step);
  for (std::size_t i = 0; i < rest.log.size(); ++i) {
    const LogRow& a = full.log[at2->global_step + i];
    const LogRow& b = rest.log[i];
    ASSERT_EQ(a.step, b.step);
    ASSERT_NEAR(a.loss.total, b.loss.total, 1e-6);
    ASSERT_NEAR(a.loss.l_h, b.loss.l_h, 1e-6);
    ASSERT_NEAR(a.loss.l_o, b.loss.l_o, 1e-6);
  }
}

TEST(Training, ResumeWithDifferentModelIsRejected) {
  const Dataset ds = tiny_dataset(4, 7);
  const auto r = train(ModelConfig::preset("tiny"), tiny_train(1), ds);
  ModelConfig other = ModelConfig::preset("tiny");
  other.reinject_head_feature = false;
  EXPECT_THROW(train(other, tiny_train(2), ds, {}, &r.checkpoint), VersionError);
}

TEST(Training, NonFiniteLossAbortsWithBatchIds) {
  const Dataset ds = tiny_dataset(8, 8);
  TrainConfig tc = tiny_train(3);
  tc.max_lr = 1e38;
  try {
    train(ModelConfig::preset("tiny"), tc, ds);
    FAIL() << "training should have aborted";
  } catch (const TrainingAborted& e) {
    EXPECT_NE(std::string(e.what()).find("scene_"), std::string::npos);
  }
}

TEST(Training, EmptyDatasetIsRejected) {
  EXPECT_THROW(train(ModelConfig::preset("tiny"), tiny_train(1), Dataset{}), InvalidArgument);
}

TEST(Training, HooksCanStopEarly) {
  TrainHooks hooks;
  hooks.on_epoch = [](const Checkpoint&) { return false; };
  const auto r = train(ModelConfig::preset("tiny"), tiny_train(5), tiny_dataset(8, 9), hooks);
  EXPECT_EQ(r.checkpoint.epochs_done, 1);
  EXPECT_EQ(r.log.size(), 2u);
}

TEST(Evaluation, RepeatableAndRejectsEmptyData) {
  const Dataset ds = tiny_dataset(8, 10);
  const auto r = train(ModelConfig::preset("tiny"), tiny_train(2), ds);
  const auto a = evaluate(r.checkpoint, ds), b = evaluate(r.checkpoint, ds);
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(to_json(a.report), to_json(b.report));
  EXPECT_THROW(evaluate(r.checkpoint, Dataset{}), InvalidArgument);
}

TEST(Evaluation, DumpedPredictionsRescoreIdentically) {
  TempDir dir;
  const Dataset ds = tiny_dataset(10, 11);
  const auto r = train(ModelConfig::preset("tiny"), tiny_train(3), ds);
  const auto ev = evaluate(r.checkpoint, ds);
  write_predictions(ev.scenes, all_annotations(ds), dir / "p.jsonl");
  const auto back = read_predictions(dir / "p.jsonl");
  EXPECT_EQ(rescore_predictions(back, ds), ev.report);
  EXPECT_EQ(to_json(rescore_predictions(back, ds)).dump(), to_json(ev.report).dump());
}

TEST(Evaluation, OracleIsPerfect) {
  SynthConfig sc;
  sc.rng_seed = 12;
  const Dataset ds = make_synthetic_dataset(sc, 20);
  const auto rep = evaluate_oracle(ds, GtConfig{}, 20).report;
  EXPECT_EQ(rep.map_instance, 1.0);
  EXPECT_EQ(*rep.avg_dist, 0.0);
}

TEST(Evaluation, BadPredictionFileReportsLine) {
  TempDir dir;
  testutil::write_text(dir / "p.jsonl", "{\"scene_id\": \"a\", \"predictions\": []}\n{oops\n");
  try {
    read_predictions(dir / "p.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Logging, CsvLayout) {
  EXPECT_EQ(csv_header(), "step,l_h,l_g,l_c,l_det,l_o,total,lr");
  LogRow row{3, {0.5, 0.25, 0.125, 1.0, 2.0, 4.0}, 1e-3};
  EXPECT_EQ(csv_row(row), "3,0.5,0.25,0.125,1,2,4,0.001");
}
