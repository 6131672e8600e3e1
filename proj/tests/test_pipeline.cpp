#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

#include "dsuda/pipeline.hpp"

using namespace dsuda;

namespace {

// Small end-to-end setup that trains in well under a second.
RunConfig tiny_config() {
  RunConfig c;
  c.synth.n_points = 24;
  c.synth.source_subjects = 8;
  c.synth.target_subjects = 6;
  c.synth.source_trials_per_subject = 2;
  c.model.input = 24;
  c.model.encoder_hidden = 8;
  c.model.latent = 4;
  c.model.decoder_hidden = 8;
  c.model.head_hidden = 4;
  c.trainer.batch_size = 8;
  c.trainer.pretrain_epochs = 3;
  c.trainer.adversarial_epochs = 2;
  c.trainer.steps_dae = 2;
  c.trainer.record_time = false;
  return c;
}

AlignedDataset tiny_data(const RunConfig& c) {
  const auto pair = generate(c.synth);
  return preprocess_run(pair.source, pair.target, c);
}

std::array<MetricsReport, 3> reports_with_acc(double acc) {
  std::array<MetricsReport, 3> r;
  r[0].acc = acc;
  return r;
}

}  // namespace

TEST(Summary, MeanAndSampleStd) {
  const auto s = summarize(std::vector<double>{0.6, 0.7, 0.8});
  EXPECT_NEAR(*s.mean, 0.7, 1e-15);
  EXPECT_NEAR(*s.std, 0.1, 1e-15);
  EXPECT_EQ(s.defined, 3u);
  const auto one = summarize(std::vector<double>{0.25});
  EXPECT_EQ(one.mean, 0.25);
  EXPECT_EQ(one.std, 0.0);
  const auto none = summarize(std::vector<double>{});
  EXPECT_FALSE(none.mean);
  EXPECT_FALSE(none.std);
}

TEST(Summary, SkipsUndefinedRuns) {
  const auto table = summarize(std::vector{reports_with_acc(0.5), reports_with_acc(0.7)});
  EXPECT_NEAR(*table[0][6].mean, 0.6, 1e-15);
  EXPECT_EQ(table[0][6].defined, 2u);
  EXPECT_FALSE(table[0][0].mean);
  EXPECT_FALSE(table[1][6].mean);
  const std::string csv = format_summary_csv(table, 2);
  EXPECT_EQ(csv.substr(0, 37), "slice,runs,npv_mean,npv_std,tnr_mean,");
  EXPECT_NE(csv.find("\nboth,2,n/a,n/a,"), std::string::npos);
  EXPECT_NE(csv.find(",0.6,0.141421356237309"), std::string::npos) << csv;
}

TEST(Parallel, VisitsEveryIndexOnce) {
  for (std::size_t workers : {1u, 3u, 16u}) {
    std::vector<std::atomic<int>> hits(50);
    parallel_for(hits.size(), workers, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(Parallel, WorkerCountFromEnvironment) {
  ::setenv("DSUDA_THREADS", "3", 1);
  EXPECT_EQ(worker_count(), 3u);
  ::setenv("DSUDA_THREADS", "0", 1);
  EXPECT_THROW(worker_count(), ValueError);
  ::unsetenv("DSUDA_THREADS");
  EXPECT_GE(worker_count(), 1u);
}

TEST(Pipeline, RunTrainingEvaluatesLabeledTarget) {
  const RunConfig c = tiny_config();
  const auto data = tiny_data(c);
  const auto r = run_training(data.source, data.target, c.model, c.trainer);
  ASSERT_TRUE(r.evaluation.has_value());
  EXPECT_EQ(r.log.size(), 5u);
  EXPECT_EQ(r.evaluation->predictions.size(), data.target.size());
  const auto again = run_training(data.source, data.target, c.model, c.trainer);
  EXPECT_EQ(r.model, again.model);
  EXPECT_EQ(format_metrics_csv(r.evaluation->reports), format_metrics_csv(again.evaluation->reports));
}

TEST(Pipeline, NoAdaptationAndResume) {
  RunConfig c = tiny_config();
  const auto data = tiny_data(c);
  const auto base = run_training(data.source, data.target, c.model, c.trainer, {.no_adaptation = true, .resume = std::nullopt});
  EXPECT_EQ(base.config.weights.alpha, 0.0);
  EXPECT_EQ(base.config.steps_suda, 0u);

  const auto full = run_training(data.source, data.target, c.model, c.trainer);
  TrainConfig zero = c.trainer;
  zero.adversarial_epochs = 0;
  const auto resumed = run_training(data.source, data.target, c.model, zero, {.no_adaptation = false, .resume = full.model});
  EXPECT_EQ(resumed.model, full.model);
  EXPECT_EQ(resumed.evaluation->reports, full.evaluation->reports);

  ModelShape other = c.model;
  other.latent = 5;
  EXPECT_THROW(run_training(data.source, data.target, other, zero, {.no_adaptation = false, .resume = full.model}), ShapeError);
}

TEST(Pipeline, InputWidthMismatchRejected) {
  RunConfig c = tiny_config();
  const auto data = tiny_data(c);
  c.model.input = 30;
  EXPECT_THROW(run_training(data.source, data.target, c.model, c.trainer), ShapeError);
}

TEST(Sweep, AxesAndKeys) {
  EXPECT_EQ(sweep_key("alpha"), "weights.alpha");
  EXPECT_EQ(sweep_key("steps_dae"), "trainer.steps_dae");
  EXPECT_THROW(sweep_key("gamma"), ValueError);
}

TEST(Sweep, RowPerValueAndDeterministic) {
  const RunConfig c = tiny_config();
  const auto data = tiny_data(c);
  const std::vector<std::string> values = {"1", "2", "3"};
  const auto a = run_sweep(data, c, "steps_dae", values, {1, 2}, 3);
  const auto b = run_sweep(data, c, "steps_dae", values, {1, 2}, 1);
  ASSERT_EQ(a.size(), 3u);
  for (const auto& row : a) {
    EXPECT_EQ(row.runs, 2u);
    EXPECT_EQ(row.failed, 0u);
  }
  EXPECT_EQ(format_sweep_csv("steps_dae", a), format_sweep_csv("steps_dae", b));
  const std::string csv = format_sweep_csv("steps_dae", a);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 3);
}

TEST(Sweep, SingleCellEqualsOneRun) {
  RunConfig c = tiny_config();
  const auto data = tiny_data(c);
  const auto rows = run_sweep(data, c, "eta", {"0.5"}, {4}, 1);
  c.trainer.weights.eta = 0.5;
  c.trainer.seed = 4;
  const auto run = run_training(data.source, data.target, c.model, c.trainer);
  for (std::size_t slice = 0; slice < 3; ++slice)
    for (std::size_t m = 0; m < 7; ++m) EXPECT_EQ(rows[0].summary[slice][m].mean, run.evaluation->reports[slice].values()[m]);
}

TEST(Sweep, FailedCellsAreRecordedAndSweepContinues) {
  const RunConfig c = tiny_config();
  const auto data = tiny_data(c);
  std::vector<SweepCell> seen;
  const auto rows =
      run_sweep(data, c, "lr_dae", {"1e300", "0.001"}, {1}, 2, [&](const SweepCell& cell) { seen.push_back(cell); });
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].failed, 1u);
  EXPECT_EQ(rows[0].runs, 0u);
  EXPECT_EQ(rows[1].failed, 0u);
  EXPECT_EQ(rows[1].runs, 1u);
  ASSERT_EQ(seen.size(), 2u);
  const auto failed = std::find_if(seen.begin(), seen.end(), [](const auto& s) { return !s.error.empty(); });
  ASSERT_NE(failed, seen.end());
  EXPECT_EQ(failed->value, "1e300");
  EXPECT_NE(format_sweep_csv("lr_dae", rows).find("lr_dae,1e300,both,0,1,n/a"), std::string::npos);
}

TEST(Sweep, RejectsBadValuesBeforeTraining) {
  const RunConfig c = tiny_config();
  const auto data = tiny_data(c);
  std::size_t cells = 0;
  EXPECT_THROW(run_sweep(data, c, "steps_dae", {"2", "zero"}, {1}, 1, [&](const SweepCell&) { ++cells; }),
               ValueError);
  EXPECT_THROW(run_sweep(data, c, "alpha", {"-1"}, {1}, 1), ValueError);
  EXPECT_THROW(run_sweep(data, c, "alpha", {}, {1}, 1), ValueError);
  EXPECT_EQ(cells, 0u);
}
