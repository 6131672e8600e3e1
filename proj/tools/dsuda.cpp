// dsuda command-line tool: generate, preprocess, train, eval, sweep, config.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dsuda/checkpoint.hpp"
#include "dsuda/config.hpp"
#include "dsuda/io.hpp"
#include "dsuda/pipeline.hpp"
#include "dsuda/synth.hpp"

namespace fs = std::filesystem;
using namespace dsuda;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;  // section.key=value
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "Override one config entry, e.g. trainer.pretrain_epochs=10")
      ->allow_extra_args(false);
}

RunConfig load_config(const CommonOptions& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValueError("--set expects section.key=value, got '" + kv + "'");
    set_config_value(cfg, trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
  }
  return cfg;
}

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory '" + dir.string() + "'");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (auto part : split(text, ',')) {
    const auto n = parse_integer(trim(part), "--seeds");
    if (n < 0) throw ValueError("--seeds entries must be non-negative");
    out.push_back(static_cast<std::uint64_t>(n));
  }
  return out;
}

std::vector<ProcessedTrial> read_processed(const fs::path& path) {
  DatasetTable table = read_dataset_csv(path);
  if (!table.has_segment_index)
    throw FormatError(path.filename().string() + ": expected a processed file (run 'dsuda preprocess' first)");
  return std::move(table.rows);
}

// ---------------------------------------------------------------------------

int cmd_generate(const CommonOptions& common, std::optional<std::uint64_t> seed, const fs::path& out) {
  RunConfig cfg = load_config(common);
  if (seed) cfg.synth.seed = *seed;
  cfg.validate();
  const DomainPair pair = generate(cfg.synth);
  const std::string source = format_raw_csv(pair.source);
  const std::string target = format_raw_csv(pair.target);
  prepare_out_dir(out);
  write_file_atomic(out / "source.csv", source);
  write_file_atomic(out / "target.csv", target);
  std::printf("source: %zu trials from %zu subjects\ntarget: %zu trials from %zu subjects\n", pair.source.size(),
              cfg.synth.source_subjects, pair.target.size(), cfg.synth.target_subjects);
  return 0;
}

int cmd_preprocess(const CommonOptions& common, const fs::path& source_path, const fs::path& target_path,
                   const fs::path& out) {
  RunConfig cfg = load_config(common);
  cfg.validate();
  const auto source = to_raw_trials(read_dataset_csv(source_path), source_path.filename().string());
  const auto target = to_raw_trials(read_dataset_csv(target_path), target_path.filename().string());
  const AlignedDataset data = preprocess_run(source, target, cfg);
  const std::string s = format_processed_csv(data.source);
  const std::string t = format_processed_csv(data.target);
  prepare_out_dir(out);
  write_file_atomic(out / "source.csv", s);
  write_file_atomic(out / "target.csv", t);
  std::printf("source: %zu raw -> %zu processed rows\ntarget: %zu raw -> %zu processed rows\ndegenerate trials: %zu\n",
              source.size(), data.source.size(), target.size(), data.target.size(), data.degenerate_count);
  return 0;
}

struct TrainFlags {
  fs::path source, target, out;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  bool no_adaptation = false;
  std::string sign_convention;
  std::string resume;
};

void write_run(const RunResult& r, const fs::path& dir) {
  prepare_out_dir(dir);
  save_checkpoint(r.model, r.config, dir / "checkpoint.json");
  write_file_atomic(dir / "train_log.csv", format_log_csv(r.log));
  if (r.evaluation) write_file_atomic(dir / "metrics.csv", format_metrics_csv(r.evaluation->reports));
}

int cmd_train(const CommonOptions& common, const TrainFlags& f) {
  RunConfig cfg = load_config(common);
  std::optional<DsudaModel> resume;
  if (!f.resume.empty()) {
    Checkpoint ck = load_checkpoint(f.resume);
    resume = std::move(ck.model);
    // The checkpoint's settings apply unless the config or flags say otherwise.
    if (common.config_path.empty() && common.overrides.empty()) {
      cfg.trainer = ck.config;
      cfg.model = resume->shape;
    }
  }
  if (f.seed) cfg.trainer.seed = *f.seed;
  if (!f.sign_convention.empty()) cfg.trainer.weights.sign = parse_sign_convention(f.sign_convention);
  cfg.validate();

  const auto source = read_processed(f.source);
  const auto target = read_processed(f.target);
  RunOptions opts;
  opts.no_adaptation = f.no_adaptation;
  opts.resume = resume;

  std::vector<std::uint64_t> seeds = f.seeds.empty() ? std::vector<std::uint64_t>{cfg.trainer.seed}
                                                     : parse_seed_list(f.seeds);
  if (f.seeds.empty()) {
    const RunResult r = run_training(source, target, cfg.model, cfg.trainer, opts);
    write_run(r, f.out);
    if (r.evaluation)
      std::fputs(format_metrics_csv(r.evaluation->reports).c_str(), stdout);
    else
      std::puts("target set is unlabeled; no metrics written");
    return 0;
  }

  std::vector<std::optional<RunResult>> results(seeds.size());
  std::vector<std::string> errors(seeds.size());
  parallel_for(seeds.size(), worker_count(), [&](std::size_t i) {
    try {
      TrainConfig tc = cfg.trainer;
      tc.seed = seeds[i];
      results[i] = run_training(source, target, cfg.model, tc, opts);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::vector<std::array<MetricsReport, 3>> reports;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!results[i]) throw TrainingError("seed " + std::to_string(seeds[i]) + ": " + errors[i]);
    write_run(*results[i], f.out / ("seed_" + std::to_string(seeds[i])));
    if (results[i]->evaluation) reports.push_back(results[i]->evaluation->reports);
  }
  if (!reports.empty()) {
    const std::string summary = format_summary_csv(summarize(reports), reports.size());
    write_file_atomic(f.out / "summary.csv", summary);
    std::fputs(summary.c_str(), stdout);
  }
  return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data_path, const fs::path& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const auto trials = read_processed(data_path);
  if (trials.empty()) throw ValueError(data_path.filename().string() + ": no rows to evaluate");
  for (std::size_t i = 0; i < trials.size(); ++i)
    if (!trials[i].label)
      throw ValueError(data_path.filename().string() + " row " + std::to_string(i + 2) + ": unlabeled row");
  const Evaluation ev = evaluate(ck.model, trials);
  const std::string metrics = format_metrics_csv(ev.reports);
  prepare_out_dir(out);
  write_file_atomic(out / "metrics.csv", metrics);
  if (ev.roc)
    write_file_atomic(out / "roc.csv", format_roc_csv(*ev.roc));
  else
    std::fputs("only one class present; ROC not written\n", stderr);
  std::fputs(metrics.c_str(), stdout);
  return 0;
}

struct SweepFlags {
  fs::path source, target, out;
  std::string axis;
  std::string values;
  std::string seeds = "0";
  std::string sign_convention;
};

int cmd_sweep(const CommonOptions& common, const SweepFlags& f) {
  RunConfig cfg = load_config(common);
  if (!f.sign_convention.empty()) cfg.trainer.weights.sign = parse_sign_convention(f.sign_convention);
  cfg.validate();
  std::vector<std::string> values;
  for (auto v : split(f.values, ',')) values.push_back(trim(v));
  const auto seeds = parse_seed_list(f.seeds);
  AlignedDataset data;
  data.source = read_processed(f.source);
  data.target = read_processed(f.target);
  prepare_out_dir(f.out);
  const auto rows = run_sweep(data, cfg, f.axis, values, seeds, worker_count(), [&](const SweepCell& cell) {
    const fs::path dir = f.out / "cells" / (f.axis + "=" + cell.value) / ("seed_" + std::to_string(cell.seed));
    prepare_out_dir(dir);
    if (cell.reports) {
      write_file_atomic(dir / "metrics.csv", format_metrics_csv(*cell.reports));
    } else {
      write_file_atomic(dir / "error.txt", cell.error + "\n");
      std::fprintf(stderr, "cell %s=%s seed %llu failed: %s\n", f.axis.c_str(), cell.value.c_str(),
                   static_cast<unsigned long long>(cell.seed), cell.error.c_str());
    }
  });
  const std::string table = format_sweep_csv(f.axis, rows);
  write_file_atomic(f.out / "sweep.csv", table);
  std::fputs(table.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled, side-aware unsupervised domain adaptation for ABR tinnitus classification"};
  app.require_subcommand(1);

  CommonOptions gen_common, pre_common, train_common, sweep_common, cfg_common;

  auto* gen = app.add_subcommand("generate", "Write a synthetic source/target dataset pair");
  add_common(gen, gen_common);
  std::optional<std::uint64_t> gen_seed;
  fs::path gen_out;
  gen->add_option("--seed", gen_seed, "Synthetic generator seed (overrides synth.seed)");
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* pre = app.add_subcommand("preprocess", "Align source trials to the target format and normalize");
  add_common(pre, pre_common);
  fs::path pre_source, pre_target, pre_out;
  pre->add_option("--source", pre_source, "Raw source CSV")->required()->check(CLI::ExistingFile);
  pre->add_option("--target", pre_target, "Raw target CSV")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Pretrain, transplant and adapt; report target metrics");
  add_common(train, train_common);
  TrainFlags tf;
  train->add_option("--source", tf.source, "Processed source CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--target", tf.target, "Processed target CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--out", tf.out, "Output directory")->required();
  train->add_option("--seed", tf.seed, "Training seed (overrides trainer.seed)");
  train->add_option("--seeds", tf.seeds, "Comma-separated seeds; one run per seed plus summary.csv");
  train->add_flag("--no-adaptation", tf.no_adaptation, "Baseline: alpha = beta = 0 and no discriminator steps");
  train->add_option("--sign-convention", tf.sign_convention, "confuse or literal")
      ->check(CLI::IsMember({"confuse", "literal"}));
  train->add_option("--resume", tf.resume, "Continue adapting from this checkpoint")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled processed CSV");
  fs::path ev_ckpt, ev_data, ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Labeled processed CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "Output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Train and evaluate over values of one hyperparameter");
  add_common(sweep, sweep_common);
  SweepFlags sf;
  sweep->add_option("--source", sf.source, "Processed source CSV")->required()->check(CLI::ExistingFile);
  sweep->add_option("--target", sf.target, "Processed target CSV")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sf.out, "Output directory")->required();
  sweep->add_option("--axis", sf.axis, "steps_dae, steps_suda, lr_dae, lr_suda, alpha, beta or eta")->required();
  sweep->add_option("--values", sf.values, "Comma-separated values")->required();
  sweep->add_option("--seeds", sf.seeds, "Comma-separated seeds")->capture_default_str();
  sweep->add_option("--sign-convention", sf.sign_convention, "confuse or literal")
      ->check(CLI::IsMember({"confuse", "literal"}));

  auto* cfg = app.add_subcommand("config", "Print the effective configuration (defaults when no file is given)");
  add_common(cfg, cfg_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_common, gen_seed, gen_out);
    if (pre->parsed()) return cmd_preprocess(pre_common, pre_source, pre_target, pre_out);
    if (train->parsed()) return cmd_train(train_common, tf);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_out);
    if (sweep->parsed()) return cmd_sweep(sweep_common, sf);
    if (cfg->parsed()) {
      RunConfig c = load_config(cfg_common);
      c.validate();
      std::fputs(format_run_config(c).c_str(), stdout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
