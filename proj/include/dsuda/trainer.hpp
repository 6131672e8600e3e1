#pragma once

// Two-stage training: pretrain the pure-info encoder, classifier and decoder
// on labeled source data; copy the pure-info encoder into the domain-variance
// encoder; then alternate discriminator ascent on L_DS with autoencoder
// descent on L_DAE. Inference uses only the pure-info encoder and classifier.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dsuda/error.hpp"
#include "dsuda/metrics.hpp"
#include "dsuda/model.hpp"
#include "dsuda/nn.hpp"
#include "dsuda/trial.hpp"

namespace dsuda {

struct TrainConfig {
  double lr_dae = 1e-3;
  double lr_suda = 1e-3;
  std::size_t steps_dae = 10;
  std::size_t steps_suda = 1;
  std::size_t batch_size = 32;  // split evenly between source and target while adapting
  std::size_t pretrain_epochs = 50;
  std::size_t adversarial_epochs = 200;
  std::uint64_t seed = 0;
  LossWeights weights;
  OptimizerKind optimizer = OptimizerKind::adam;
  // Write measured wall time into the log; off gives byte-reproducible logs.
  bool record_time = true;

  void validate() const {
    if (!(lr_dae > 0.0) || !(lr_suda > 0.0) || !std::isfinite(lr_dae) || !std::isfinite(lr_suda))
      throw ValueError("learning rates must be positive");
    if (steps_dae < 1) throw ValueError("steps_dae must be at least 1");
    if (batch_size < 2) throw ValueError("batch_size must be at least 2");
    weights.validate();
  }

  // Continued autoencoder training with the adversarial parts switched off.
  TrainConfig no_adaptation() const {
    TrainConfig c = *this;
    c.weights.alpha = 0.0;
    c.weights.beta = 0.0;
    c.steps_suda = 0;
    return c;
  }

  bool operator==(const TrainConfig&) const = default;
};

enum class Stage { pretrain, adversarial };

inline std::string_view to_string(Stage s) { return s == Stage::pretrain ? "pretrain" : "adversarial"; }

// Per-epoch mean losses. Pretraining has no discriminating terms: l_d,
// l_side and l_ds are recorded as 0 and l_dae holds the pretraining
// objective L_cls + L_ae.
struct TrainLogRecord {
  Stage stage = Stage::pretrain;
  std::size_t epoch = 0;
  double l_cls = 0.0, l_ae = 0.0, l_d = 0.0, l_side = 0.0, l_ds = 0.0, l_dae = 0.0;
  double seconds = 0.0;
};

using TrainLog = std::vector<TrainLogRecord>;

inline std::string format_log_header() { return "stage,epoch,l_cls,l_ae,l_d,l_side,l_ds,l_dae,seconds\n"; }

inline std::string format_log_row(const TrainLogRecord& r) {
  std::string s(to_string(r.stage));
  s += ',' + std::to_string(r.epoch);
  for (double v : {r.l_cls, r.l_ae, r.l_d, r.l_side, r.l_ds, r.l_dae, r.seconds}) s += ',' + format_real(v);
  s += '\n';
  return s;
}

inline std::string format_log_csv(const TrainLog& log) {
  std::string out = format_log_header();
  for (const auto& r : log) out += format_log_row(r);
  return out;
}

enum class StepKind { discriminator, autoencoder };

// Called after every parameter update of the adversarial stage.
using StepObserver = std::function<void(StepKind, const DsudaModel&)>;

struct TrainStats {
  std::size_t batches = 0;
  std::size_t discriminator_updates = 0;
  std::size_t autoencoder_updates = 0;
};

// FNV-1a over the parameter bytes of one network.
inline std::uint64_t checksum(const DenseNet& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const Vector& v) {
    for (double d : v) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &d, sizeof d);
      for (unsigned char b : bytes) h = (h ^ b) * 0x100000001b3ULL;
    }
  };
  for (const auto& l : net.layers) {
    mix(l.weights);
    mix(l.bias);
  }
  return h;
}

namespace detail {
inline BatchItem as_item(const ProcessedTrial& t, bool keep_label) {
  return {t.samples, t.domain, t.side, keep_label ? t.label : std::nullopt};
}

struct MeanAccumulator {
  double sum = 0.0;
  std::size_t n = 0;
  void add(const std::optional<double>& v) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::array<Optimizer, kPartCount> make_optimizers(const DsudaModel& m, const TrainConfig& cfg) {
  std::array<Optimizer, kPartCount> out;
  for (Part p : kAllParts) {
    const double lr = kDiscriminatorParts.contains(p) ? cfg.lr_suda : cfg.lr_dae;
    out[static_cast<std::size_t>(p)] = Optimizer(cfg.optimizer, m.net(p), lr);
  }
  return out;
}

inline void apply(DsudaModel& m, std::array<Optimizer, kPartCount>& opt, const ModelGradients& g, PartMask parts) {
  for (Part p : kAllParts)
    if (parts.contains(p)) opt[static_cast<std::size_t>(p)].step(m.net(p), g.part(p));
}
}  // namespace detail

// Fits f_pe, f_c and f_de to L_cls + L_ae on labeled source trials. The
// decoder sees (e_c, e_c) because f_ve is not meaningful yet.
inline TrainLog pretrain(DsudaModel& model, std::span<const ProcessedTrial> source, const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (source.empty()) throw ValueError("pretraining needs source trials");
  for (const auto& t : source)
    if (!t.label) throw ValueError("pretraining on an unlabeled source trial (subject " + t.subject_id + ")");

  TrainLog log;
  if (cfg.pretrain_epochs == 0) return log;
  std::mt19937_64 rng(cfg.seed);
  auto opt = detail::make_optimizers(model, cfg);
  ModelGradients grads = ModelGradients::zeros_like(model);
  LossTerms terms;
  terms.cls = 1.0;
  terms.ae = 1.0;

  std::vector<std::size_t> order(source.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    detail::MeanAccumulator cls, ae;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      Batch batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i)
        batch.items.push_back(detail::as_item(source[order[i]], true));
      grads.set_zero();
      const auto br = evaluate_objective(model, batch, terms, &grads, kPretrainParts, DecoderInput::pure_twice);
      detail::apply(model, opt, grads, kPretrainParts);
      cls.add(br.l_cls);
      ae.add(br.l_ae);
    }
    TrainLogRecord r;
    r.stage = Stage::pretrain;
    r.epoch = epoch + 1;
    r.l_cls = cls.mean();
    r.l_ae = ae.mean();
    r.l_dae = r.l_cls + r.l_ae;
    r.seconds = cfg.record_time ? detail::seconds_since(start) : 0.0;
    log.push_back(r);
  }
  return log;
}

// Copies the pure-info encoder's parameters into the domain-variance encoder.
inline void transplant(DsudaModel& model) {
  const DenseNet& pe = model.net(Part::pure_encoder);
  DenseNet& ve = model.net(Part::variance_encoder);
  if (!pe.same_shape(ve)) throw ShapeError("encoders differ in shape; cannot transplant");
  const auto revision = ve.revision;
  ve = pe;
  ve.revision = revision + 1;
}

// Alternating optimization. Each batch takes batch_size/2 source and
// batch_size/2 target trials (target labels are never read); an epoch has
// enough batches to visit every trial of the larger domain once.
inline TrainLog adversarial_train(DsudaModel& model, std::span<const ProcessedTrial> source,
                                  std::span<const ProcessedTrial> target, const TrainConfig& cfg,
                                  const StepObserver& observer = {}, TrainStats* stats = nullptr) {
  cfg.validate();
  model.validate();
  if (source.empty() || target.empty()) throw ValueError("adversarial training needs source and target trials");
  for (const auto& t : source)
    if (!t.label) throw ValueError("unlabeled source trial (subject " + t.subject_id + ")");

  TrainLog log;
  std::mt19937_64 rng(cfg.seed ^ 0xad7e45a1ULL);
  auto opt = detail::make_optimizers(model, cfg);
  ModelGradients grads = ModelGradients::zeros_like(model);
  const std::size_t half = cfg.batch_size / 2;
  const std::size_t batches = (std::max(source.size(), target.size()) + half - 1) / half;

  std::vector<std::size_t> s_order(source.size()), t_order(target.size());
  std::iota(s_order.begin(), s_order.end(), std::size_t{0});
  std::iota(t_order.begin(), t_order.end(), std::size_t{0});
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < cfg.adversarial_epochs; ++epoch) {
    std::shuffle(s_order.begin(), s_order.end(), rng);
    std::shuffle(t_order.begin(), t_order.end(), rng);
    detail::MeanAccumulator cls, ae, ld, lside, lds, ldae;
    std::size_t sided_batches = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      Batch batch;
      for (std::size_t i = 0; i < half; ++i) batch.items.push_back(detail::as_item(source[s_order[(b * half + i) % source.size()]], true));
      for (std::size_t i = 0; i < half; ++i) batch.items.push_back(detail::as_item(target[t_order[(b * half + i) % target.size()]], false));
      const bool with_side = batch.has_both_sides();
      sided_batches += with_side;
      const LossTerms ds_terms = discriminator_terms(cfg.weights, with_side);
      const LossTerms dae_terms = autoencoder_terms(cfg.weights, with_side);

      for (std::size_t s = 0; s < cfg.steps_suda; ++s) {
        grads.set_zero();
        evaluate_objective(model, batch, ds_terms, &grads, kDiscriminatorParts);
        detail::apply(model, opt, grads, kDiscriminatorParts);
        if (stats) ++stats->discriminator_updates;
        if (observer) observer(StepKind::discriminator, model);
      }
      for (std::size_t s = 0; s < cfg.steps_dae; ++s) {
        grads.set_zero();
        const auto br = evaluate_objective(model, batch, dae_terms, &grads, kAutoencoderParts);
        if (s == 0) {
          cls.add(br.l_cls);
          ae.add(br.l_ae);
          ld.add(br.l_d());
          lside.add(br.l_side());
          if (br.l_d()) lds.add(*br.l_d() + cfg.weights.eta * br.l_side().value_or(0.0));
          ldae.add(br.objective);
        }
        detail::apply(model, opt, grads, kAutoencoderParts);
        if (stats) ++stats->autoencoder_updates;
        if (observer) observer(StepKind::autoencoder, model);
      }
      if (stats) ++stats->batches;
    }
    if (sided_batches == 0)
      throw TrainingError("epoch " + std::to_string(epoch + 1) +
                          ": no batch contained both left and right trials; side adaptation impossible");
    TrainLogRecord r;
    r.stage = Stage::adversarial;
    r.epoch = epoch + 1;
    r.l_cls = cls.mean();
    r.l_ae = ae.mean();
    r.l_d = ld.mean();
    r.l_side = lside.mean();
    r.l_ds = lds.mean();
    r.l_dae = ldae.mean();
    r.seconds = cfg.record_time ? detail::seconds_since(start) : 0.0;
    for (double v : {r.l_cls, r.l_ae, r.l_d, r.l_side, r.l_ds, r.l_dae})
      if (!std::isfinite(v)) throw NonFiniteError("non-finite loss in adversarial epoch " + std::to_string(r.epoch));
    log.push_back(r);
  }
  return log;
}

// Pretrain, transplant, adapt.
inline TrainLog train(DsudaModel& model, std::span<const ProcessedTrial> source, std::span<const ProcessedTrial> target,
                      const TrainConfig& cfg) {
  TrainLog log = pretrain(model, source, cfg);
  transplant(model);
  TrainLog adv = adversarial_train(model, source, target, cfg);
  log.insert(log.end(), adv.begin(), adv.end());
  return log;
}

// ---------------------------------------------------------------------------
// Inference and evaluation

struct Prediction {
  int label = 0;
  double probability = 0.0;
};

inline Prediction infer(const DsudaModel& model, std::span<const double> x) {
  if (x.size() != model.shape.input)
    throw ShapeError("trial has " + std::to_string(x.size()) + " points, model expects " +
                     std::to_string(model.shape.input));
  const double p = classify(model, net_forward(model.net(Part::pure_encoder), x).output_vector());
  return {predicted_label(p), p};
}

inline std::vector<Prediction> infer_all(const DsudaModel& model, std::span<const ProcessedTrial> trials) {
  std::vector<Prediction> out;
  out.reserve(trials.size());
  for (const auto& t : trials) out.push_back(infer(model, t.samples));
  return out;
}

inline double accuracy(const DsudaModel& model, std::span<const ProcessedTrial> trials) {
  if (trials.empty()) throw ValueError("accuracy over zero trials");
  std::size_t correct = 0;
  for (const auto& t : trials) {
    if (!t.label) throw ValueError("accuracy needs labeled trials");
    correct += infer(model, t.samples).label == *t.label;
  }
  return static_cast<double>(correct) / static_cast<double>(trials.size());
}

struct Evaluation {
  std::array<MetricsReport, 3> reports;  // both, left, right
  std::optional<RocSeries> roc;          // absent when only one class is present
  std::vector<Prediction> predictions;
};

inline Evaluation evaluate(const DsudaModel& model, std::span<const ProcessedTrial> trials) {
  Evaluation ev;
  ev.predictions = infer_all(model, trials);
  std::vector<int> preds, truths;
  std::vector<Side> sides;
  std::vector<double> scores;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (!trials[i].label) throw ValueError("evaluation needs labeled trials (subject " + trials[i].subject_id + ")");
    preds.push_back(ev.predictions[i].label);
    truths.push_back(*trials[i].label);
    sides.push_back(trials[i].side);
    scores.push_back(ev.predictions[i].probability);
  }
  ev.reports = side_reports(preds, truths, sides);
  const bool both_classes = std::count(truths.begin(), truths.end(), 1) > 0 &&
                            std::count(truths.begin(), truths.end(), 0) > 0;
  if (both_classes) ev.roc = roc_auc(scores, truths);
  return ev;
}

// ---------------------------------------------------------------------------
// Folds and probes

// Fold index per trial. All trials sharing (domain, subject_id) land in the
// same fold, so segments of one recording and both ears of one subject never
// straddle folds.
inline std::vector<std::size_t> subject_folds(std::span<const ProcessedTrial> trials, std::size_t folds,
                                              std::uint64_t seed) {
  if (folds < 1) throw ValueError("need at least one fold");
  std::map<std::pair<int, std::string>, std::size_t> group_of;
  std::vector<std::size_t> group(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto key = std::make_pair(static_cast<int>(trials[i].domain), trials[i].subject_id);
    auto [it, inserted] = group_of.try_emplace(key, group_of.size());
    group[i] = it->second;
  }
  std::vector<std::size_t> fold_of_group(group_of.size());
  std::iota(fold_of_group.begin(), fold_of_group.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(fold_of_group.begin(), fold_of_group.end(), rng);
  std::vector<std::size_t> rank(group_of.size());
  for (std::size_t r = 0; r < fold_of_group.size(); ++r) rank[fold_of_group[r]] = r;
  std::vector<std::size_t> out(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) out[i] = rank[group[i]] % folds;
  return out;
}

inline std::vector<Vector> pure_features(const DsudaModel& model, std::span<const ProcessedTrial> trials) {
  std::vector<Vector> out;
  out.reserve(trials.size());
  for (const auto& t : trials) out.push_back(net_forward(model.net(Part::pure_encoder), t.samples).output_vector());
  return out;
}

// Cross-validated accuracy of an L2-regularized logistic regression trained
// by full-batch gradient descent on standardized features; fold k is held
// out while the rest trains.
inline double linear_probe_accuracy(const std::vector<Vector>& features, std::span<const int> labels,
                                    std::span<const std::size_t> fold_of, std::size_t folds,
                                    std::size_t iterations = 2000, double l2 = 1e-3) {
  if (features.empty() || features.size() != labels.size() || labels.size() != fold_of.size())
    throw ShapeError("probe inputs differ in length");
  const std::size_t dim = features.front().size();
  std::size_t correct = 0, tested = 0;
  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < features.size(); ++i) (fold_of[i] == k ? test : train).push_back(i);
    if (test.empty() || train.empty()) continue;
    Vector mean(dim, 0.0), sd(dim, 0.0);
    for (auto i : train)
      for (std::size_t d = 0; d < dim; ++d) mean[d] += features[i][d];
    for (auto& m : mean) m /= static_cast<double>(train.size());
    for (auto i : train)
      for (std::size_t d = 0; d < dim; ++d) sd[d] += (features[i][d] - mean[d]) * (features[i][d] - mean[d]);
    for (auto& s : sd) s = std::sqrt(s / static_cast<double>(train.size())) + 1e-12;
    auto z = [&](std::size_t i, std::size_t d) { return (features[i][d] - mean[d]) / sd[d]; };

    Vector w(dim, 0.0);
    double bias = 0.0;
    const double lr = 0.5;
    for (std::size_t it = 0; it < iterations; ++it) {
      Vector gw(dim, 0.0);
      double gb = 0.0;
      for (auto i : train) {
        double s = bias;
        for (std::size_t d = 0; d < dim; ++d) s += w[d] * z(i, d);
        const double err = activate(Activation::sigmoid, s) - labels[i];
        for (std::size_t d = 0; d < dim; ++d) gw[d] += err * z(i, d);
        gb += err;
      }
      const double inv = 1.0 / static_cast<double>(train.size());
      for (std::size_t d = 0; d < dim; ++d) w[d] -= lr * (gw[d] * inv + l2 * w[d]);
      bias -= lr * gb * inv;
    }
    for (auto i : test) {
      double s = bias;
      for (std::size_t d = 0; d < dim; ++d) s += w[d] * z(i, d);
      correct += (s >= 0.0 ? 1 : 0) == labels[i];
      ++tested;
    }
  }
  if (tested == 0) throw ValueError("probe has no held-out items");
  return static_cast<double>(correct) / static_cast<double>(tested);
}

}  // namespace dsuda
