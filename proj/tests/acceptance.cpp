// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1).

#include <chrono>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>

#include "dsuda/checkpoint.hpp"
#include "dsuda/metrics.hpp"
#include "dsuda/pipeline.hpp"
#include "dsuda/preprocess.hpp"
#include "dsuda/synth.hpp"
#include "support.hpp"

using namespace dsuda;
using namespace dsuda::testing;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(int n, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", n, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

// ---------------------------------------------------------------------------

void gradient_suite() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> width(2, 6);
  double worst = 0.0;
  std::string worst_at = "-";
  for (int i = 0; i < 100; ++i) {
    ModelShape shape;
    shape.input = width(rng) + 1;
    shape.encoder_hidden = width(rng);
    shape.latent = width(rng);
    shape.decoder_hidden = width(rng);
    shape.head_hidden = width(rng);
    const DsudaModel m = random_model(static_cast<std::uint64_t>(i), shape);
    auto ob = random_batch(shape.input, 2, rng);
    LossWeights confuse, literal;
    confuse.beta = literal.beta = 0.5;
    literal.sign = SignConvention::literal;
    const std::pair<const char*, LossTerms> losses[] = {
        {"L_cls", cls_terms()},
        {"L_ae", ae_terms()},
        {"L_d", ld_terms()},
        {"L_side", lside_terms()},
        {"L_DAE(confuse)", autoencoder_terms(confuse)},
        {"L_DAE(literal)", autoencoder_terms(literal)},
    };
    // Components near 1e-8 occur; a 1e-4 step keeps their central-difference
    // roundoff below the tolerance while truncation error stays O(1e-8).
    for (const auto& [name, terms] : losses) {
      const double e = objective_gradient_error(m, ob.batch, terms, DecoderInput::pure_and_variance, 1e-4);
      if (e > worst) {
        worst = e;
        worst_at = fmt("%s model %d", name, i);
      }
    }
  }
  const double t = seconds(start);
  verdict(2, worst < 1e-4 && t < 60.0,
          fmt("max relative error %.3g (%s) over 100 models x 6 objectives; %.1f s", worst, worst_at.c_str(), t));
}

void preprocess_geometry() {
  PreprocessConfig cfg;  // 500 pts / 10 ms source, 131 pts / 8 ms target, step 20
  const auto widths = downsample_widths(cfg.window_points(), cfg.target_points);
  const std::size_t width_sum = std::accumulate(widths.begin(), widths.end(), std::size_t{0});

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<RawTrial> source, target;
  for (int i = 0; i < 20; ++i) {
    Vector s(500);
    for (auto& v : s) v = n(rng);
    source.push_back({"S" + std::to_string(i), Domain::source, Side::left, i % 2, 10.0, s, ""});
  }
  target.push_back({"T0", Domain::target, Side::left, std::nullopt, 8.0, Vector(131, 0.0), ""});
  for (auto& v : target[0].samples) v = n(rng);
  const auto aligned = align_dataset(source, target, cfg);

  bool shape_ok = aligned.source.size() == 6 * source.size();
  bool range_ok = true;
  for (const auto& t : aligned.source) {
    shape_ok = shape_ok && t.samples.size() == 131;
    for (double v : t.samples) range_ok = range_ok && v >= 0.0 && v <= 1.0;
  }
  double worst_mean = 0.0;
  for (const auto& trial : source)
    for (const auto& seg : slide_window(trial, cfg)) {
      const Vector d = downsample(seg, cfg.target_points);
      double weighted = 0.0;
      for (std::size_t k = 0; k < d.size(); ++k) weighted += static_cast<double>(widths[k]) * d[k];
      const double direct = std::accumulate(seg.begin(), seg.end(), 0.0);
      worst_mean = std::max(worst_mean, std::abs(weighted - direct) / static_cast<double>(seg.size()));
    }
  verdict(3, shape_ok && range_ok && width_sum == 400 && worst_mean <= 1e-12,
          fmt("%zu trials -> %zu segments of 131 points, values in [0,1]: %s; width sum %zu; "
              "weighted-mean deviation %.2g",
              source.size(), aligned.source.size(), range_ok ? "yes" : "no", width_sum, worst_mean));
}

void table_f1_arithmetic() {
  struct Row {
    const char* model;
    double npv, tnr, n_f1, ppv, tpr, p_f1;
  };
  // Both-sides rows as printed in the paper's overall comparison table.
  const Row rows[] = {
      {"XGBoost", 0.467, 0.525, 0.494, 0.457, 0.400, 0.427},
      {"Nu-SVC", 0.467, 0.350, 0.400, 0.480, 0.600, 0.533},
      {"DSUDA", 0.789, 0.750, 0.769, 0.762, 0.800, 0.780},
  };
  double worst = 0.0;
  for (const auto& r : rows) {
    worst = std::max(worst, std::abs(*harmonic_mean(r.npv, r.tnr) - r.n_f1));
    worst = std::max(worst, std::abs(*harmonic_mean(r.ppv, r.tpr) - r.p_f1));
  }
  verdict(4, worst <= 0.001, fmt("max |recomputed F1 - printed F1| = %.4f over XGBoost, Nu-SVC, DSUDA", worst));
}

// Criteria 5, 6 and 7 share one 5-seed experiment on the default synthetic data.
void adaptation_experiment() {
  const RunConfig cfg;
  const auto pair = generate(cfg.synth);
  const AlignedDataset data = preprocess_run(pair.source, pair.target, cfg);
  const double bayes = bayes_reference(cfg.synth, 10000);

  std::vector<int> sides;
  for (const auto& t : data.target) sides.push_back(side_index(t.side));
  const auto folds = subject_folds(data.target, 5, 1);

  constexpr std::size_t kSeeds = 5;
  struct SeedResult {
    double source_only = 0, dsuda = 0, baseline = 0, probe_before = 0, probe_after = 0;
    std::size_t violations = 0, steps = 0;
  };
  std::vector<SeedResult> results(kSeeds);
  std::vector<std::string> errors(kSeeds);

  const auto start = Clock::now();
  parallel_for(kSeeds, worker_count(), [&](std::size_t s) {
    try {
      SeedResult& r = results[s];
      TrainConfig tc = cfg.trainer;
      tc.seed = s;
      tc.record_time = false;
      DsudaModel pretrained = DsudaModel::create(cfg.model, tc.seed);
      pretrain(pretrained, data.source, tc);
      transplant(pretrained);
      r.source_only = accuracy(pretrained, data.target);
      r.probe_before = linear_probe_accuracy(pure_features(pretrained, data.target), sides, folds, 5);

      DsudaModel full = pretrained;
      std::array<std::uint64_t, kPartCount> last{};
      for (Part p : kAllParts) last[static_cast<std::size_t>(p)] = checksum(full.net(p));
      auto observer = [&](StepKind kind, const DsudaModel& now) {
        const PartMask frozen = kind == StepKind::discriminator ? kAutoencoderParts : kDiscriminatorParts;
        for (Part p : kAllParts) {
          const auto h = checksum(now.net(p));
          if (frozen.contains(p) && h != last[static_cast<std::size_t>(p)]) ++r.violations;
          last[static_cast<std::size_t>(p)] = h;
        }
        ++r.steps;
      };
      adversarial_train(full, data.source, data.target, tc, observer);
      r.dsuda = accuracy(full, data.target);
      r.probe_after = linear_probe_accuracy(pure_features(full, data.target), sides, folds, 5);

      DsudaModel base = pretrained;
      adversarial_train(base, data.source, data.target, tc.no_adaptation());
      r.baseline = accuracy(base, data.target);
    } catch (const std::exception& e) {
      errors[s] = e.what();
    }
  });
  const double elapsed = seconds(start);

  for (std::size_t s = 0; s < kSeeds; ++s)
    if (!errors[s].empty()) {
      const std::string msg = fmt("seed %zu failed: %s", s, errors[s].c_str());
      verdict(5, false, msg);
      verdict(6, false, msg);
      verdict(7, false, msg);
      return;
    }

  auto mean = [&](double SeedResult::*field) {
    double sum = 0.0;
    for (const auto& r : results) sum += r.*field;
    return sum / static_cast<double>(kSeeds);
  };
  const double dsuda = mean(&SeedResult::dsuda), baseline = mean(&SeedResult::baseline);
  const double source_only = mean(&SeedResult::source_only);
  std::string per_seed;
  for (std::size_t s = 0; s < kSeeds; ++s)
    per_seed += fmt("%s%.3f/%.3f", s ? " " : "", results[s].dsuda, results[s].baseline);
  const bool gain_ok = dsuda - baseline >= 0.10;
  const bool bayes_ok = dsuda >= 0.85 * bayes;
  verdict(5, gain_ok && bayes_ok && elapsed < 300.0,
          fmt("DSUDA %.3f vs no-adaptation %.3f (gain %+.3f, need >= 0.10); %.1f%% of Bayes reference %.3f "
              "(need >= 85%%); source-only %.3f; per seed dsuda/base [%s]; %.0f s",
              dsuda, baseline, dsuda - baseline, 100.0 * dsuda / bayes, bayes, source_only, per_seed.c_str(),
              elapsed));

  const double before = mean(&SeedResult::probe_before), after = mean(&SeedResult::probe_after);
  verdict(6, before >= 0.80 && after <= 0.60,
          fmt("left/right probe on pure-info features: %.3f before adaptation (need >= 0.80), %.3f after "
              "(need <= 0.60), mean over %zu seeds",
              before, after, kSeeds));

  std::size_t violations = 0, steps = 0;
  for (const auto& r : results) {
    violations += r.violations;
    steps += r.steps;
  }
  verdict(7, violations == 0 && steps > 0,
          fmt("%zu parameter updates observed, %zu frozen-part changes", steps, violations));
}

void determinism_and_persistence() {
  RunConfig cfg;
  cfg.trainer.pretrain_epochs = 10;
  cfg.trainer.adversarial_epochs = 10;
  cfg.trainer.record_time = false;
  cfg.trainer.seed = 11;
  const auto pair = generate(cfg.synth);
  const AlignedDataset data = preprocess_run(pair.source, pair.target, cfg);
  const auto a = run_training(data.source, data.target, cfg.model, cfg.trainer);
  const auto b = run_training(data.source, data.target, cfg.model, cfg.trainer);
  const std::string ck_a = format_checkpoint(a.model, a.config), ck_b = format_checkpoint(b.model, b.config);
  const std::string m_a = format_metrics_csv(a.evaluation->reports), m_b = format_metrics_csv(b.evaluation->reports);
  const Checkpoint back = parse_checkpoint(ck_a);
  const std::string m_back = format_metrics_csv(evaluate(back.model, data.target).reports);
  const std::string roc_a = format_roc_csv(*a.evaluation->roc);
  const std::string roc_back = format_roc_csv(*evaluate(back.model, data.target).roc);
  verdict(8, ck_a == ck_b && m_a == m_b && m_back == m_a && roc_back == roc_a && back.model == a.model,
          fmt("checkpoints identical: %s; metric reports identical: %s; round-trip metrics identical: %s",
              ck_a == ck_b ? "yes" : "no", m_a == m_b ? "yes" : "no",
              m_back == m_a && roc_back == roc_a ? "yes" : "no"));
}

void auc_oracle() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> len(2, 50), coin(0, 1), grid(0, 20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto n = static_cast<std::size_t>(len(rng));
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool ties = i % 2 == 0;
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = ties ? grid(rng) / 20.0 : u(rng);
      y[j] = coin(rng);
    }
    y[0] = 1;
    y[1] = 0;
    double concordant = 0.0, pairs = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q)
        if (y[p] == 1 && y[q] == 0) {
          pairs += 1.0;
          concordant += s[p] > s[q] ? 1.0 : s[p] == s[q] ? 0.5 : 0.0;
        }
    worst = std::max(worst, std::abs(roc_auc(s, y).class1.auc - concordant / pairs));
  }
  verdict(9, worst <= 1e-12, fmt("max |AUC - pair-count AUC| = %.2g over 200 instances", worst));
}

}  // namespace

int main() {
  std::printf("criterion 1: INFO  the paper's clinical ABR datasets are not distributed, so its reported numbers "
              "cannot be reproduced; criteria 2-9 substitute property checks\n");
  const std::pair<const char*, void (*)()> steps[] = {
      {"2", gradient_suite},      {"3", preprocess_geometry},          {"4", table_f1_arithmetic},
      {"5-7", adaptation_experiment}, {"8", determinism_and_persistence}, {"9", auc_oracle},
  };
  for (const auto& [name, fn] : steps) {
    try {
      fn();
    } catch (const std::exception& e) {
      std::printf("criterion %s: FAIL  %s\n", name, e.what());
      ++failures;
    }
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
