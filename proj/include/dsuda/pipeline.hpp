#pragma once

// End-to-end runs shared by the command-line tool and the acceptance suite:
// raw trials -> aligned trials -> trained model -> target metrics, plus
// across-seed summaries and parameter sweeps.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dsuda/config.hpp"
#include "dsuda/metrics.hpp"
#include "dsuda/model.hpp"
#include "dsuda/preprocess.hpp"
#include "dsuda/trainer.hpp"

namespace dsuda {

inline AlignedDataset preprocess_run(const std::vector<RawTrial>& source, const std::vector<RawTrial>& target,
                                     const RunConfig& cfg) {
  const PreprocessConfig geometry =
      cfg.infer_geometry ? infer_geometry(source, target, cfg.preprocess.slide_step) : cfg.preprocess;
  return align_dataset(source, target, geometry);
}

struct RunOptions {
  bool no_adaptation = false;
  std::optional<DsudaModel> resume;  // skip pretraining and continue adapting this model
};

struct RunResult {
  DsudaModel model;
  TrainConfig config;  // the configuration actually used
  TrainLog log;
  std::optional<Evaluation> evaluation;  // present when every target trial is labeled
};

inline bool all_labeled(std::span<const ProcessedTrial> trials) {
  return !trials.empty() && std::all_of(trials.begin(), trials.end(), [](const auto& t) { return t.label.has_value(); });
}

// Pretrain, transplant and adapt (or only adapt, when resuming); then
// evaluate transductively on the target trials.
inline RunResult run_training(std::span<const ProcessedTrial> source, std::span<const ProcessedTrial> target,
                              const ModelShape& shape, const TrainConfig& base, const RunOptions& opts = {}) {
  RunResult r;
  r.config = opts.no_adaptation ? base.no_adaptation() : base;
  r.config.validate();
  if (!target.empty() && target.front().samples.size() != shape.input)
    throw ShapeError("target trials have " + std::to_string(target.front().samples.size()) +
                     " points but model.input is " + std::to_string(shape.input));
  if (opts.resume) {
    r.model = *opts.resume;
    if (!(r.model.shape == shape)) throw ShapeError("checkpoint architecture differs from the configured model");
  } else {
    r.model = DsudaModel::create(shape, r.config.seed);
    r.log = pretrain(r.model, source, r.config);
    transplant(r.model);
  }
  TrainLog adv = adversarial_train(r.model, source, target, r.config);
  r.log.insert(r.log.end(), adv.begin(), adv.end());
  if (all_labeled(target)) r.evaluation = evaluate(r.model, target);
  return r;
}

// ---------------------------------------------------------------------------
// Across-run summaries

struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> std;  // sample standard deviation; 0 for a single run
  std::size_t defined = 0;     // runs in which the metric was defined
};

// Per slice (both, left, right) and metric (kMetricNames order).
using SummaryTable = std::array<std::array<MetricSummary, 7>, 3>;

inline MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  s.defined = values.size();
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  s.mean = mean;
  s.std = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return s;
}

inline SummaryTable summarize(const std::vector<std::array<MetricsReport, 3>>& runs) {
  SummaryTable table;
  for (std::size_t slice = 0; slice < 3; ++slice)
    for (std::size_t m = 0; m < 7; ++m) {
      std::vector<double> values;
      for (const auto& run : runs)
        if (const auto v = run[slice].values()[m]) values.push_back(*v);
      table[slice][m] = summarize(values);
    }
  return table;
}

inline std::string summary_header(std::string_view prefix) {
  std::string h(prefix);
  for (auto name : kMetricNames) h += "," + std::string(name) + "_mean," + std::string(name) + "_std";
  return h;
}

inline std::string summary_cells(const std::array<MetricSummary, 7>& row) {
  std::string out;
  for (const auto& s : row) out += "," + format_metric(s.mean) + "," + format_metric(s.std);
  return out;
}

inline std::string format_summary_csv(const SummaryTable& table, std::size_t runs) {
  std::string out = summary_header("slice,runs") + "\n";
  for (std::size_t slice = 0; slice < 3; ++slice)
    out += std::string(to_string(static_cast<Slice>(slice))) + "," + std::to_string(runs) +
           summary_cells(table[slice]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Parallel cells

// Worker count: DSUDA_THREADS when set (at least 1), else the hardware concurrency.
inline std::size_t worker_count() {
  if (const char* env = std::getenv("DSUDA_THREADS"); env && *env) {
    const long long n = parse_integer(env, "DSUDA_THREADS");
    if (n < 1) throw ValueError("DSUDA_THREADS must be at least 1");
    return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs job(i) for i in [0, n) on up to `workers` threads. Each job owns its
// outputs, so scheduling order cannot change results.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& job) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Sweeps

inline constexpr std::array<std::string_view, 7> kSweepAxes = {"steps_dae", "steps_suda", "lr_dae", "lr_suda",
                                                               "alpha",     "beta",       "eta"};

inline std::string sweep_key(std::string_view axis) {
  if (std::find(kSweepAxes.begin(), kSweepAxes.end(), axis) == kSweepAxes.end())
    throw ValueError("unknown sweep axis '" + std::string(axis) +
                     "'; expected steps_dae, steps_suda, lr_dae, lr_suda, alpha, beta or eta");
  const bool weight = axis == "alpha" || axis == "beta" || axis == "eta";
  return std::string(weight ? "weights." : "trainer.") + std::string(axis);
}

struct SweepCell {
  std::string value;
  std::uint64_t seed = 0;
  std::optional<std::array<MetricsReport, 3>> reports;
  std::string error;  // set when the cell failed
};

struct SweepRow {
  std::string value;
  std::size_t runs = 0;
  std::size_t failed = 0;
  SummaryTable summary;
};

// One train+eval per (value, seed). Failures are recorded per cell and do
// not stop the sweep. `on_cell` (optional) sees every finished cell.
inline std::vector<SweepRow> run_sweep(const AlignedDataset& data, const RunConfig& base, std::string_view axis,
                                       const std::vector<std::string>& values, const std::vector<std::uint64_t>& seeds,
                                       std::size_t workers,
                                       const std::function<void(const SweepCell&)>& on_cell = {}) {
  if (values.empty()) throw ValueError("sweep needs at least one value");
  if (seeds.empty()) throw ValueError("sweep needs at least one seed");
  if (!all_labeled(data.target)) throw ValueError("sweep needs labeled target trials to report metrics");
  const std::string key = sweep_key(axis);
  // Reject malformed values before any training starts.
  for (const auto& v : values) {
    RunConfig probe = base;
    set_config_value(probe, key, v);
    probe.validate();
  }
  std::vector<SweepCell> cells(values.size() * seeds.size());
  std::mutex report_lock;
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    SweepCell& cell = cells[i];
    cell.value = values[i / seeds.size()];
    cell.seed = seeds[i % seeds.size()];
    try {
      RunConfig cfg = base;
      set_config_value(cfg, key, cell.value);
      cfg.trainer.seed = cell.seed;
      cfg.trainer.record_time = false;
      auto result = run_training(data.source, data.target, cfg.model, cfg.trainer);
      cell.reports = result.evaluation->reports;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    if (on_cell) {
      std::lock_guard lock(report_lock);
      on_cell(cell);
    }
  });

  std::vector<SweepRow> rows;
  for (std::size_t v = 0; v < values.size(); ++v) {
    SweepRow row;
    row.value = values[v];
    std::vector<std::array<MetricsReport, 3>> ok;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto& cell = cells[v * seeds.size() + s];
      if (cell.reports)
        ok.push_back(*cell.reports);
      else
        ++row.failed;
    }
    row.runs = ok.size();
    row.summary = summarize(ok);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string format_sweep_csv(std::string_view axis, const std::vector<SweepRow>& rows) {
  std::string out = summary_header("axis,value,slice,runs,failed") + "\n";
  for (const auto& row : rows)
    for (std::size_t slice = 0; slice < 3; ++slice)
      out += std::string(axis) + "," + row.value + "," + std::string(to_string(static_cast<Slice>(slice))) + "," +
             std::to_string(row.runs) + "," + std::to_string(row.failed) + summary_cells(row.summary[slice]) + "\n";
  return out;
}

}  // namespace dsuda
