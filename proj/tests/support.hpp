#pragma once

// Helpers shared by the model/trainer tests and the acceptance suite.

#include <random>
#include <string>
#include <vector>

#include "dsuda/model.hpp"
#include "dsuda/trial.hpp"

namespace dsuda::testing {

inline ModelShape small_shape() {
  ModelShape s;
  s.input = 6;
  s.encoder_hidden = 5;
  s.latent = 3;
  s.decoder_hidden = 4;
  s.head_hidden = 3;
  return s;
}

// Seeded model with non-zero biases so that no parameter sits at a special point.
inline DsudaModel random_model(std::uint64_t seed, const ModelShape& shape = small_shape()) {
  DsudaModel m = DsudaModel::create(shape, seed);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& n : m.nets)
    for (auto& l : n.layers)
      for (auto& b : l.bias) b = u(rng);
  // Encoders start different so that e_c != e_v.
  for (auto& w : m.net(Part::variance_encoder).layers[0].weights) w += u(rng);
  return m;
}

// Owns its sample storage; `batch` views into it.
struct OwnedBatch {
  std::vector<Vector> samples;
  Batch batch;
};

// Every (domain, side) combination appears; source items are labeled.
inline OwnedBatch random_batch(std::size_t input, std::size_t per_cell, std::mt19937_64& rng) {
  OwnedBatch ob;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ob.samples.resize(4 * per_cell);
  for (auto& x : ob.samples) {
    x.resize(input);
    for (auto& v : x) v = u(rng);
  }
  std::size_t i = 0;
  for (Domain d : {Domain::source, Domain::target})
    for (Side s : {Side::left, Side::right})
      for (std::size_t k = 0; k < per_cell; ++k, ++i) {
        std::optional<int> label;
        if (d == Domain::source) label = static_cast<int>(i % 2);
        ob.batch.items.push_back({ob.samples[i], d, s, label});
      }
  return ob;
}

// Max relative error between evaluate_objective's gradient (all parts
// trainable) and central differences of its objective.
inline double objective_gradient_error(DsudaModel model, const Batch& batch, const LossTerms& terms,
                                       DecoderInput input = DecoderInput::pure_and_variance, double eps = 1e-5) {
  ModelGradients g = ModelGradients::zeros_like(model);
  evaluate_objective(model, batch, terms, &g, PartMask::all(), input);
  const Vector analytic = g.flatten();
  const auto params = model_parameters(model);
  return max_relative_gradient_error(
      std::span<double* const>(params), analytic,
      [&] { return evaluate_objective(model, batch, terms, nullptr, {}, input).objective; }, eps);
}

inline LossTerms cls_terms() {
  LossTerms t;
  t.cls = 1.0;
  return t;
}
inline LossTerms ae_terms() {
  LossTerms t;
  t.ae = 1.0;
  return t;
}
inline LossTerms ld_terms() {
  LossTerms t;
  t.domain_target = 1.0;
  t.domain_source = -1.0;
  return t;
}
inline LossTerms lside_terms() {
  LossTerms t;
  t.side_right = 1.0;
  t.side_left = -1.0;
  return t;
}

}  // namespace dsuda::testing
