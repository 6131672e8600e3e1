#pragma once

// Paired source/target datasets drawn from a linear-Gaussian signal model:
//
//   x = gain * (T_c(t - latency_side) + sum_k z_k b_k(t)) + offset + drift(t) + noise
//
// T_c is a class template (sum of sinusoids), b_k a low-frequency subject
// basis with z_k ~ N(0, subject_sigma^2) shared by all trials of a subject,
// noise ~ N(0, noise_sigma^2) per sample. Gain/offset/drift apply to the
// target domain only, latency to right-ear trials only. Because every class-
// and side-conditional distribution is Gaussian with a shared covariance,
// the Bayes-optimal rule is linear and bayes_reference can evaluate it exactly.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsuda/error.hpp"
#include "dsuda/trial.hpp"

namespace dsuda {

struct Sinusoid {
  double amplitude = 1.0;
  double frequency_hz = 500.0;
  double phase = 0.0;  // radians
  bool operator==(const Sinusoid&) const = default;
};

struct SynthConfig {
  std::size_t n_points = 131;
  double duration_ms = 8.0;
  std::size_t source_subjects = 38;
  std::size_t target_subjects = 40;
  std::size_t source_trials_per_subject = 3;

  std::vector<Sinusoid> class0_template = {{1.0, 500.0, 0.0}, {0.6, 1000.0, 0.0}};
  std::vector<Sinusoid> class1_template = {{1.0, 500.0, 0.0}, {0.6, 1000.0, 1.2}};

  std::vector<double> subject_basis_hz = {125.0, 250.0};
  double subject_sigma = 0.3;

  double target_gain = 1.5;
  double target_offset = 0.5;
  // Drift sits on the class-discriminative 1000 Hz component, so per-trial
  // normalization cannot remove it and a source-only classifier degrades.
  double drift_amplitude = 0.4;
  double drift_hz = 1000.0;
  double drift_phase = std::numbers::pi / 2.0;

  double side_latency_ms = 0.3;
  double noise_sigma = 0.15;
  std::uint64_t seed = 1;

  // Skips the distinct-template requirement (bayes_reference accepts identical templates).
  void validate_shape() const {
    if (n_points < 8) throw ValueError("synth.n_points must be at least 8");
    if (!(duration_ms > 0.0)) throw ValueError("synth.duration_ms must be positive");
    if (source_trials_per_subject < 1) throw ValueError("synth.source_trials_per_subject must be at least 1");
    if (!(noise_sigma >= 0.0)) throw ValueError("synth.noise_sigma must be non-negative");
    if (!(subject_sigma >= 0.0)) throw ValueError("synth.subject_sigma must be non-negative");
    if (!(target_gain > 0.0)) throw ValueError("synth.target_gain must be positive");
  }

  void validate() const;
};

namespace detail {
inline double sinusoids(const std::vector<Sinusoid>& parts, double t_ms) {
  double v = 0.0;
  for (const auto& s : parts) v += s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency_hz * t_ms / 1000.0 + s.phase);
  return v;
}

inline double sample_time(const SynthConfig& cfg, std::size_t j) {
  return cfg.duration_ms * static_cast<double>(j) / static_cast<double>(cfg.n_points);
}
}  // namespace detail

// Class template of `label`, shifted later by `latency_ms`.
inline Vector class_template(const SynthConfig& cfg, int label, double latency_ms = 0.0) {
  const auto& parts = label == 1 ? cfg.class1_template : cfg.class0_template;
  Vector out(cfg.n_points);
  for (std::size_t j = 0; j < cfg.n_points; ++j) out[j] = detail::sinusoids(parts, detail::sample_time(cfg, j) - latency_ms);
  return out;
}

// Subject-perturbation basis, one column per entry of subject_basis_hz (sine and cosine each).
inline Eigen::MatrixXd subject_basis(const SynthConfig& cfg) {
  Eigen::MatrixXd b(cfg.n_points, 2 * cfg.subject_basis_hz.size());
  for (std::size_t j = 0; j < cfg.n_points; ++j) {
    const double t = detail::sample_time(cfg, j);
    for (std::size_t k = 0; k < cfg.subject_basis_hz.size(); ++k) {
      const double w = 2.0 * std::numbers::pi * cfg.subject_basis_hz[k] * t / 1000.0;
      b(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(2 * k)) = std::sin(w);
      b(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(2 * k + 1)) = std::cos(w);
    }
  }
  return b;
}

inline void SynthConfig::validate() const {
  validate_shape();
  const Vector a = class_template(*this, 0);
  const Vector b = class_template(*this, 1);
  double dist = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dist += (a[i] - b[i]) * (a[i] - b[i]);
  if (!(dist > 1e-18)) throw ValueError("synth class templates are identical");
}

// Mean of a trial with the given label/domain/side, before subject and noise terms.
inline Vector expected_signal(const SynthConfig& cfg, int label, Domain domain, Side side) {
  Vector x = class_template(cfg, label, side == Side::right ? cfg.side_latency_ms : 0.0);
  if (domain == Domain::target)
    for (std::size_t j = 0; j < x.size(); ++j)
      x[j] = cfg.target_gain * x[j] + cfg.target_offset +
             cfg.drift_amplitude *
                 std::sin(2.0 * std::numbers::pi * cfg.drift_hz * detail::sample_time(cfg, j) / 1000.0 + cfg.drift_phase);
  return x;
}

namespace detail {
// Independent stream per (seed, domain, subject) so subjects can be generated in any order.
inline std::mt19937_64 subject_rng(std::uint64_t seed, Domain domain, std::size_t subject) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(domain == Domain::source ? 0x5eed : 0x7a6e),
                    static_cast<std::uint32_t>(subject)};
  return std::mt19937_64(seq);
}

inline Vector draw_trial(const SynthConfig& cfg, const Eigen::MatrixXd& basis, const Eigen::VectorXd& z, int label,
                         Domain domain, Side side, std::mt19937_64& rng) {
  Vector x = expected_signal(cfg, label, domain, side);
  const Eigen::VectorXd perturbation = basis * z;
  const double gain = domain == Domain::target ? cfg.target_gain : 1.0;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t j = 0; j < x.size(); ++j)
    x[j] += gain * perturbation(static_cast<Eigen::Index>(j)) + cfg.noise_sigma * noise(rng);
  return x;
}

inline Eigen::VectorXd draw_subject(const SynthConfig& cfg, Eigen::Index k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(k);
  for (Eigen::Index i = 0; i < k; ++i) z(i) = cfg.subject_sigma * normal(rng);
  return z;
}
}  // namespace detail

struct DomainPair {
  std::vector<RawTrial> source;  // one ear per subject, labeled
  std::vector<RawTrial> target;  // both ears per subject; labels kept for evaluation only
};

inline std::string subject_name(char prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return std::string(1, prefix) + digits;
}

inline DomainPair generate(const SynthConfig& cfg) {
  cfg.validate();
  const Eigen::MatrixXd basis = subject_basis(cfg);
  DomainPair pair;
  for (std::size_t s = 0; s < cfg.source_subjects; ++s) {
    auto rng = detail::subject_rng(cfg.seed, Domain::source, s);
    const int label = static_cast<int>(s % 2);
    const Side side = std::bernoulli_distribution(0.5)(rng) ? Side::right : Side::left;
    const Eigen::VectorXd z = detail::draw_subject(cfg, basis.cols(), rng);
    for (std::size_t k = 0; k < cfg.source_trials_per_subject; ++k) {
      RawTrial t{subject_name('S', s), Domain::source, side, label, cfg.duration_ms,
                 detail::draw_trial(cfg, basis, z, label, Domain::source, side, rng), ""};
      t.id = t.subject_id + "/" + std::to_string(k);
      pair.source.push_back(std::move(t));
    }
  }
  for (std::size_t s = 0; s < cfg.target_subjects; ++s) {
    auto rng = detail::subject_rng(cfg.seed, Domain::target, s);
    const int label = static_cast<int>(s % 2);
    const Eigen::VectorXd z = detail::draw_subject(cfg, basis.cols(), rng);
    for (Side side : {Side::left, Side::right}) {
      RawTrial t{subject_name('T', s), Domain::target, side, label, cfg.duration_ms,
                 detail::draw_trial(cfg, basis, z, label, Domain::target, side, rng), ""};
      t.id = t.subject_id + (side == Side::left ? "/L" : "/R");
      pair.target.push_back(std::move(t));
    }
  }
  return pair;
}

// Monte-Carlo accuracy of the likelihood-ratio rule on target trials, using
// the true class means and covariance (side known, equal class priors).
inline double bayes_reference(const SynthConfig& cfg, std::size_t n_mc) {
  cfg.validate_shape();
  if (n_mc < 1000) throw ValueError("bayes_reference needs at least 1000 draws");
  const Eigen::MatrixXd basis = subject_basis(cfg);
  const double scale = cfg.target_gain * cfg.subject_sigma;

  // Discriminant direction Sigma^{-1} (mu1 - mu0) up to a positive factor,
  // Sigma = scale^2 B B^T + noise^2 I. With noise > 0 this is Woodbury; with
  // noise == 0 the limit projects out span(B).
  auto direction = [&](const Eigen::VectorXd& delta) -> Eigen::VectorXd {
    if (scale == 0.0 || basis.cols() == 0) return delta;
    const double lambda = (cfg.noise_sigma * cfg.noise_sigma) / (scale * scale);
    Eigen::MatrixXd gram = basis.transpose() * basis;
    gram.diagonal().array() += lambda;
    return delta - basis * gram.ldlt().solve(basis.transpose() * delta);
  };

  struct Rule {
    Eigen::VectorXd w;
    double threshold = 0.0;
  };
  std::array<Rule, 2> rules;
  for (Side side : {Side::left, Side::right}) {
    const Vector m0 = expected_signal(cfg, 0, Domain::target, side);
    const Vector m1 = expected_signal(cfg, 1, Domain::target, side);
    const Eigen::Map<const Eigen::VectorXd> mu0(m0.data(), static_cast<Eigen::Index>(m0.size()));
    const Eigen::Map<const Eigen::VectorXd> mu1(m1.data(), static_cast<Eigen::Index>(m1.size()));
    Rule r;
    r.w = direction(mu1 - mu0);
    r.threshold = r.w.dot(0.5 * (mu0 + mu1));
    rules[static_cast<std::size_t>(side_index(side))] = std::move(r);
  }

  std::mt19937_64 rng(cfg.seed ^ 0xba7e5ULL);
  std::bernoulli_distribution coin(0.5);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const int label = coin(rng) ? 1 : 0;
    const Side side = coin(rng) ? Side::right : Side::left;
    const Eigen::VectorXd z = detail::draw_subject(cfg, basis.cols(), rng);
    const Vector x = detail::draw_trial(cfg, basis, z, label, Domain::target, side, rng);
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    const Rule& r = rules[static_cast<std::size_t>(side_index(side))];
    const int predicted = r.w.dot(xv) >= r.threshold ? 1 : 0;
    correct += predicted == label;
  }
  return static_cast<double>(correct) / static_cast<double>(n_mc);
}

}  // namespace dsuda
