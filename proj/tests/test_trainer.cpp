#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "helpers.hpp"
#include "xact/train/trainer.hpp"

using namespace xact;
using xact::testing::dense_records;
using xact::testing::small_config;

namespace {

struct Data {
  std::vector<MaterialRecord> train, test;
  Data(std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
    auto recs = dense_records(n_train + n_test, seed);
    train.assign(recs.begin(), recs.begin() + static_cast<long>(n_train));
    test.assign(recs.begin() + static_cast<long>(n_train), recs.end());
  }
};

TrainConfig quick(std::vector<Task> tasks = {Task::ef, Task::crystal_system}) {
  TrainConfig c;
  c.batch_size = 16;
  c.epochs = 3;
  c.seed = 5;
  c.tasks = std::move(tasks);
  c.schedule.lr_peak = 1e-3;
  return c;
}

ModelConfig with_dropout() {
  auto m = small_config();
  m.dropout = 0.1;
  return m;
}

bool same_parameters(const Model<float>& a, const Model<float>& b) {
  bool same = true;
  std::vector<const nn::Matrix<float>*> va;
  a.params().for_each([&](const nn::Parameter<float>& p) { va.push_back(&p.value); });
  std::size_t i = 0;
  b.params().for_each([&](const nn::Parameter<float>& p) {
    const auto& m = *va[i++];
    same = same && m.rows() == p.value.rows() && m.cols() == p.value.cols() &&
           std::memcmp(m.data(), p.value.data(), sizeof(float) * static_cast<std::size_t>(m.size())) == 0;
  });
  return same && i == va.size();
}

}  // namespace

TEST(Sampler, TasksAndRecordsAreUniform) {
  const auto recs = dense_records(30, 1);
  const std::vector<Task> tasks{Task::ef, Task::band_gap, Task::crystal_system};
  const auto labeled = labeled_index(recs, tasks);
  Rng rng(2);
  const int n = 30000;
  const auto rows = sample_tasks(n, tasks, labeled, rng);
  std::map<Task, int> per_task;
  std::vector<int> per_record(30, 0);
  for (const auto& r : rows) {
    ++per_task[r.task];
    if (r.task == Task::ef) ++per_record[r.record];
  }
  // Chi-square with 2 and 29 degrees of freedom, 0.999 quantiles 13.8 and 58.3.
  double chi_task = 0;
  for (Task t : tasks) chi_task += std::pow(per_task[t] - n / 3.0, 2) / (n / 3.0);
  EXPECT_LT(chi_task, 13.8);
  const double e = per_task[Task::ef] / 30.0;
  double chi_rec = 0;
  for (int c : per_record) chi_rec += (c - e) * (c - e) / e;
  EXPECT_LT(chi_rec, 58.3);
}

TEST(Sampler, OnlyLabeledRecordsAreDrawn) {
  auto recs = dense_records(10, 3);
  for (std::size_t i = 0; i < recs.size(); i += 2) recs[i].targets.band_gap.reset();
  const std::vector<Task> tasks{Task::band_gap};
  const auto labeled = labeled_index(recs, tasks);
  Rng rng(4);
  for (const auto& r : sample_tasks(500, tasks, labeled, rng)) EXPECT_EQ(r.record % 2, 1u);
  for (auto& r : recs) r.targets.band_gap.reset();
  EXPECT_THROW(sample_tasks(4, tasks, labeled_index(recs, tasks), rng), Error);
}

TEST(Trainer, SameSeedGivesIdenticalLogs) {
  Data d(64, 32, 6);
  auto run = [&] {
    Trainer t(with_dropout(), quick(), TrainMode::supervised, d.train, d.test);
    t.run();
    return std::make_pair(history_csv(t.history()), loss_csv(t.losses()));
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_NE(a.first.find("\n0,0,ef,mae,"), std::string::npos);

  auto other = quick();
  other.seed = 6;
  Trainer t(with_dropout(), other, TrainMode::supervised, d.train, d.test);
  t.run();
  EXPECT_NE(loss_csv(t.losses()), a.second);
}

TEST(Trainer, EvaluatesEveryEpochAndAtStart) {
  Data d(48, 16, 7);
  Trainer t(small_config(), quick({Task::ef}), TrainMode::supervised, d.train, d.test);
  t.run();
  std::vector<long> steps;
  for (const auto& h : t.history()) steps.push_back(h.step);
  // 3 steps per epoch; the 5% and 15% snapshots land on step 1 and 25% on step 2.
  EXPECT_EQ(steps, (std::vector<long>{0, 1, 2, 3, 6, 9}));
}

TEST(Trainer, LossFallsOnSyntheticData) {
  Data d(256, 64, 8);
  auto c = quick({Task::ef});
  c.epochs = 6;
  Trainer t(small_config(), c, TrainMode::supervised, d.train, d.test);
  t.run();
  EXPECT_LT(t.history().back().value, t.history().front().value);
}

TEST(Trainer, ResumeIsBitwiseIdentical) {
  Data d(64, 32, 9);
  for (TrainMode mode : {TrainMode::supervised, TrainMode::pretrain}) {
    auto c = quick();
    c.objective = PretrainObjective::both;
    Trainer full(with_dropout(), c, mode, d.train, d.test);
    full.run();

    Trainer first(with_dropout(), c, mode, d.train, d.test);
    for (int i = 0; i < 5; ++i) first.advance();
    const auto ck = decode_checkpoint(encode_checkpoint(first.checkpoint()));
    Trainer second(with_dropout(), c, mode, d.train, d.test);
    second.resume(ck);
    EXPECT_EQ(second.step(), 5);
    second.run();

    EXPECT_TRUE(same_parameters(full.model(), second.model())) << mode_name(mode);
    EXPECT_EQ(history_csv(full.history()), history_csv(second.history()));
    ASSERT_EQ(full.losses().size(), 12u);
    ASSERT_EQ(second.losses().size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(full.losses()[5 + i].total, second.losses()[i].total);
  }
}

TEST(Trainer, ResumeRejectsForeignCheckpoint) {
  Data d(32, 16, 10);
  Trainer a(small_config(), quick(), TrainMode::supervised, d.train, d.test);
  a.advance();
  auto other = quick();
  other.batch_size = 8;
  Trainer b(small_config(), other, TrainMode::supervised, d.train, d.test);
  EXPECT_THROW(b.resume(a.checkpoint()), Error);
  auto big = small_config();
  big.fusion.dim = 16;
  Trainer c(big, quick(), TrainMode::supervised, d.train, d.test);
  EXPECT_THROW(c.initialize_from(a.checkpoint()), Error);
}

TEST(Trainer, FrozenModulesStayFixed) {
  Data d(48, 16, 11);
  auto c = quick({Task::ef});
  c.freeze = {"composition", "xrd"};
  Trainer t(small_config(), c, TrainMode::supervised, d.train, d.test);
  std::map<std::string, nn::Matrix<float>> before;
  t.model().params().for_each([&](const nn::Parameter<float>& p) { before[p.name] = p.value; });
  t.run();
  int changed = 0;
  t.model().params().for_each([&](const nn::Parameter<float>& p) {
    const bool same = p.value == before[p.name];
    if (p.name.rfind("comp.", 0) == 0 || p.name.rfind("xrd.", 0) == 0)
      EXPECT_TRUE(same) << p.name;
    else
      changed += !same;
  });
  EXPECT_GT(changed, 0);

  c.freeze = {"mxm"};
  auto uni = small_config(Modality::composition);
  EXPECT_THROW(Trainer(uni, c, TrainMode::supervised, d.train, d.test), Error);
}

TEST(Trainer, PretrainLogsEnabledTermsOnly) {
  Data d(32, 0, 12);
  for (auto obj : {PretrainObjective::contrastive, PretrainObjective::mxm, PretrainObjective::both}) {
    auto c = quick();
    c.epochs = 1;
    c.objective = obj;
    Trainer t(small_config(), c, TrainMode::pretrain, d.train);
    t.run();
    for (const auto& r : t.losses()) {
      EXPECT_EQ(std::isnan(r.contrastive), obj == PretrainObjective::mxm);
      EXPECT_EQ(std::isnan(r.mxm), obj == PretrainObjective::contrastive);
      EXPECT_TRUE(std::isnan(r.supervised));
    }
  }
  auto c = quick();
  EXPECT_THROW(Trainer(small_config(), c, TrainMode::pretrain, d.train), Error);
  c.objective = PretrainObjective::mxm;
  EXPECT_THROW(Trainer(small_config(Modality::xrd), c, TrainMode::pretrain, d.train), Error);
}

TEST(Trainer, SnapshotsAtRequestedFractions) {
  Data d(64, 16, 13);
  auto c = quick({Task::ef});
  c.epochs = 5;  // 20 steps
  Trainer t(small_config(), c, TrainMode::supervised, d.train, d.test);
  std::vector<std::pair<long, double>> seen;
  t.on_snapshot([&](const Trainer& tr, double f) { seen.emplace_back(tr.step(), f); });
  t.run();
  EXPECT_EQ(seen, (std::vector<std::pair<long, double>>{{1, 0.05}, {3, 0.15}, {5, 0.25}}));
}

TEST(Trainer, InitializeFromPretrainedBackbone) {
  Data d(32, 16, 14);
  auto pc = quick();
  pc.objective = PretrainObjective::mxm;
  pc.epochs = 1;
  Trainer p(small_config(), pc, TrainMode::pretrain, d.train);
  p.run();
  Trainer f(small_config(), quick({Task::ef}), TrainMode::supervised, d.train, d.test);
  f.initialize_from(p.checkpoint());
  EXPECT_TRUE(same_parameters(p.model(), f.model()));
  f.advance();
  EXPECT_THROW(f.initialize_from(p.checkpoint()), Error);
}

TEST(Speedup, ReferenceExamples) {
  const Threshold mae{"ef", "mae", 0.081};
  History base{{0, 0, "ef", "mae", 1.0}, {12000, 1, "ef", "mae", 0.081}};
  History cand{{0, 0, "ef", "mae", 1.0}, {3000, 1, "ef", "mae", 0.081}};
  EXPECT_DOUBLE_EQ(measure_speedup(base, cand, {mae}), 4.0);
  EXPECT_DOUBLE_EQ(measure_speedup(base, base, {mae}), 1.0);
  EXPECT_DOUBLE_EQ(measure_speedup(cand, base, {mae}), 0.25);
}

TEST(Speedup, InterpolationAndCompoundThresholds) {
  History h{{0, 0, "ef", "mae", 0.5},       {100, 1, "ef", "mae", 0.3},       {200, 2, "ef", "mae", 0.1},
            {0, 0, "cs", "accuracy", 0.2}, {100, 1, "cs", "accuracy", 0.9}, {200, 2, "cs", "accuracy", 0.97}};
  EXPECT_DOUBLE_EQ(*first_crossing(h, {"ef", "mae", 0.2}), 150.0);
  EXPECT_DOUBLE_EQ(*first_crossing(h, {"cs", "accuracy", 0.958}), 100.0 + 100.0 * (0.958 - 0.9) / 0.07);
  EXPECT_DOUBLE_EQ(*first_crossing(h, {"ef", "mae", 0.6}), 0.0);
  EXPECT_FALSE(first_crossing(h, {"ef", "mae", 0.05}));

  History fast{{0, 0, "ef", "mae", 0.5}, {50, 1, "ef", "mae", 0.1}, {0, 0, "cs", "accuracy", 0.2}, {50, 1, "cs", "accuracy", 0.99}};
  const std::vector<Threshold> both{{"ef", "mae", 0.2}, {"cs", "accuracy", 0.958}};
  const double base = 100.0 + 100.0 * (0.958 - 0.9) / 0.07;
  const double cand = std::max(50.0 * 0.75, 50.0 * (0.958 - 0.2) / 0.79);
  EXPECT_NEAR(measure_speedup(h, fast, both), base / cand, 1e-12);
  EXPECT_EQ(measure_speedup(h, h, {{"ef", "mae", 0.2}}), 1.0);
  EXPECT_THROW(measure_speedup(h, fast, {{"cs", "accuracy", 0.98}}), Error);
  EXPECT_EQ(measure_speedup(fast, h, {{"cs", "accuracy", 0.98}}), 0.0);
  EXPECT_DOUBLE_EQ(measure_speedup(fast, h, {{"ef", "mae", 0.1}}), 0.25);
  EXPECT_THROW(measure_speedup(h, fast, {}), Error);
}

TEST(History, CsvRoundTrip) {
  History h{{0, 0, "ef", "mae", 0.1 + 0.2}, {71, 1, "crystal_system", "accuracy", 1.0 / 3.0}};
  const auto text = history_csv(h);
  EXPECT_EQ(parse_history_csv(text), h);
  EXPECT_EQ(history_csv(parse_history_csv(text)), text);
  EXPECT_THROW(parse_history_csv("step,value\n"), Error);
  EXPECT_THROW(parse_history_csv("step,epoch,task,metric,value\n1,0,ef,mae\n"), Error);
  EXPECT_THROW(parse_history_csv("step,epoch,task,metric,value\nx,0,ef,mae,1\n"), Error);
}

TEST(Config, RoundTripAndStrictness) {
  RunConfig r;
  r.model = small_config();
  r.train = quick();
  r.train.objective = PretrainObjective::both;
  r.data = {"a.xshard", "s.json"};
  const auto j = run_config_to_json(r);
  const auto back = run_config_from_json(j);
  EXPECT_EQ(back.model, r.model);
  EXPECT_EQ(run_config_to_json(back), j);
  EXPECT_EQ(config_hash(back.model, back.train, "supervised"), config_hash(r.model, r.train, "supervised"));
  EXPECT_NE(config_hash(r.model, r.train, "pretrain"), config_hash(r.model, r.train, "supervised"));
  EXPECT_EQ(run_config_from_json(j, "/cfg").data.records, "/cfg/a.xshard");

  auto bad = j;
  bad["train"]["learning_rate"] = 1.0;
  EXPECT_THROW(run_config_from_json(bad), Error);
  bad = j;
  bad["model"]["xrd"].erase("dim");
  EXPECT_THROW(run_config_from_json(bad), Error);
  bad = j;
  bad["train"]["schedule"]["lr_peak"] = -1.0;
  EXPECT_THROW(run_config_from_json(bad), Error);
  bad = j;
  bad["train"]["freeze"] = {"decoder"};
  EXPECT_THROW(run_config_from_json(bad), Error);
  bad = j;
  bad["train"]["pretrain_objective"] = "mlm";
  EXPECT_THROW(run_config_from_json(bad), Error);
}

TEST(Checkpoint, CorruptionIsDetected) {
  Data d(16, 0, 15);
  auto c = quick();
  c.objective = PretrainObjective::mxm;
  c.epochs = 1;
  Trainer t(small_config(), c, TrainMode::pretrain, d.train);
  const auto bytes = encode_checkpoint(t.checkpoint());
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(flipped), ShardError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ShardError);
  EXPECT_THROW(decode_checkpoint("XACT" + bytes.substr(4)), ShardError);
  const auto model = load_model(decode_checkpoint(bytes));
  EXPECT_TRUE(same_parameters(t.model(), *model));
}
