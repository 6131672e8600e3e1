#pragma once

// The six-network assembly (pure-info encoder, domain-variance encoder,
// decoder, classifier, domain and side discriminators) and its loss terms.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsuda/error.hpp"
#include "dsuda/nn.hpp"
#include "dsuda/trial.hpp"

namespace dsuda {

struct ModelShape {
  std::size_t input = 131;
  std::size_t encoder_hidden = 64;
  std::size_t latent = 32;
  std::size_t decoder_hidden = 96;
  std::size_t head_hidden = 16;

  void validate() const {
    if (input < 2) throw ValueError("model input must have at least 2 points");
    if (encoder_hidden == 0 || latent == 0 || decoder_hidden == 0 || head_hidden == 0)
      throw ValueError("model layer widths must be positive");
  }
  bool operator==(const ModelShape&) const = default;
};

enum class SignConvention { confuse, literal };

inline std::string_view to_string(SignConvention s) { return s == SignConvention::confuse ? "confuse" : "literal"; }

inline SignConvention parse_sign_convention(std::string_view s) {
  if (s == "confuse") return SignConvention::confuse;
  if (s == "literal") return SignConvention::literal;
  throw ValueError("sign convention must be 'confuse' or 'literal', got '" + std::string(s) + "'");
}

struct LossWeights {
  double alpha = 1.0;  // domain adversarial term
  double beta = 1e-6;  // side adversarial term
  double eta = 1.0;    // side share of the discriminating loss
  SignConvention sign = SignConvention::confuse;

  void validate() const {
    for (double w : {alpha, beta, eta})
      if (!(w >= 0.0) || !std::isfinite(w)) throw ValueError("loss weights must be finite and non-negative");
  }
  bool operator==(const LossWeights&) const = default;
};

enum class Part : std::size_t {
  pure_encoder,
  variance_encoder,
  decoder,
  classifier,
  domain_discriminator,
  side_discriminator,
};
inline constexpr std::size_t kPartCount = 6;
inline constexpr std::array<Part, kPartCount> kAllParts = {
    Part::pure_encoder, Part::variance_encoder,     Part::decoder,
    Part::classifier,   Part::domain_discriminator, Part::side_discriminator};

inline std::string_view to_string(Part p) {
  constexpr std::array<std::string_view, kPartCount> names = {
      "pure_encoder", "variance_encoder", "decoder", "classifier", "domain_discriminator", "side_discriminator"};
  return names[static_cast<std::size_t>(p)];
}

// Bit set over Part.
class PartMask {
 public:
  constexpr PartMask() = default;
  constexpr PartMask(std::initializer_list<Part> parts) {
    for (Part p : parts) bits_ |= bit(p);
  }
  constexpr bool contains(Part p) const { return (bits_ & bit(p)) != 0; }
  static constexpr PartMask all() {
    PartMask m;
    m.bits_ = (1u << kPartCount) - 1;
    return m;
  }

 private:
  static constexpr unsigned bit(Part p) { return 1u << static_cast<unsigned>(p); }
  unsigned bits_ = 0;
};

inline constexpr PartMask kAutoencoderParts{Part::pure_encoder, Part::variance_encoder, Part::decoder,
                                            Part::classifier};
inline constexpr PartMask kDiscriminatorParts{Part::domain_discriminator, Part::side_discriminator};
inline constexpr PartMask kPretrainParts{Part::pure_encoder, Part::decoder, Part::classifier};

struct DsudaModel {
  ModelShape shape;
  std::array<DenseNet, kPartCount> nets;

  DenseNet& net(Part p) { return nets[static_cast<std::size_t>(p)]; }
  const DenseNet& net(Part p) const { return nets[static_cast<std::size_t>(p)]; }

  // Untrained model with every network drawn from one seeded generator.
  static DsudaModel create(const ModelShape& shape, std::uint64_t seed) {
    shape.validate();
    DsudaModel m;
    m.shape = shape;
    m.net(Part::pure_encoder) =
        make_dense_net({shape.input, shape.encoder_hidden, shape.latent}, Activation::tanh);
    m.net(Part::variance_encoder) = m.net(Part::pure_encoder);
    m.net(Part::decoder) =
        make_dense_net({2 * shape.latent, shape.decoder_hidden, shape.input}, Activation::sigmoid);
    m.net(Part::classifier) = make_dense_net({shape.latent, shape.head_hidden, 1}, Activation::sigmoid);
    m.net(Part::domain_discriminator) = m.net(Part::classifier);
    m.net(Part::side_discriminator) = m.net(Part::classifier);
    std::mt19937_64 rng(seed);
    for (auto& n : m.nets) init_glorot_uniform(n, rng);
    return m;
  }

  void validate() const {
    shape.validate();
    for (const auto& n : nets) n.validate();
    const auto& pe = net(Part::pure_encoder);
    if (!pe.same_shape(net(Part::variance_encoder)))
      throw ShapeError("pure-info and domain-variance encoders differ in shape");
    if (pe.input_size() != shape.input || pe.output_size() != shape.latent)
      throw ShapeError("encoder does not map " + std::to_string(shape.input) + " -> " + std::to_string(shape.latent));
    if (net(Part::decoder).input_size() != 2 * shape.latent || net(Part::decoder).output_size() != shape.input)
      throw ShapeError("decoder must map 2 x latent -> input");
    for (Part p : {Part::classifier, Part::domain_discriminator, Part::side_discriminator})
      if (net(p).input_size() != shape.latent || net(p).output_size() != 1 ||
          net(p).layers.back().activation != Activation::sigmoid)
        throw ShapeError(std::string(to_string(p)) + " must map latent -> one sigmoid score");
  }

  bool operator==(const DsudaModel& o) const { return shape == o.shape && nets == o.nets; }
};

struct LatentPair {
  Vector class_embedding;     // from the pure-info encoder
  Vector variance_embedding;  // from the domain-variance encoder
};

inline LatentPair encode(const DsudaModel& model, std::span<const double> x) {
  return {net_forward(model.net(Part::pure_encoder), x).output_vector(),
          net_forward(model.net(Part::variance_encoder), x).output_vector()};
}

inline Vector concat(std::span<const double> a, std::span<const double> b) {
  Vector out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline Vector reconstruct(const DsudaModel& model, const LatentPair& pair) {
  if (pair.class_embedding.size() != model.shape.latent || pair.variance_embedding.size() != model.shape.latent)
    throw ShapeError("latent pair does not match the model's latent size " + std::to_string(model.shape.latent));
  return net_forward(model.net(Part::decoder), concat(pair.class_embedding, pair.variance_embedding)).output_vector();
}

// Probability of the positive (tinnitus) class.
inline double classify(const DsudaModel& model, std::span<const double> class_embedding) {
  if (class_embedding.size() != model.shape.latent)
    throw ShapeError("class embedding has " + std::to_string(class_embedding.size()) + " values, expected " +
                     std::to_string(model.shape.latent));
  return net_forward(model.net(Part::classifier), class_embedding).output()(0, 0);
}

// Ties at exactly 0.5 go to the positive class.
inline int predicted_label(double probability) { return probability >= 0.5 ? 1 : 0; }

// ---------------------------------------------------------------------------
// Batches and losses

struct BatchItem {
  std::span<const double> x;
  Domain domain = Domain::source;
  Side side = Side::left;
  std::optional<int> label;
};

struct Batch {
  std::vector<BatchItem> items;

  std::size_t count(Domain d) const {
    std::size_t n = 0;
    for (const auto& it : items) n += it.domain == d;
    return n;
  }
  std::size_t count(Side s) const {
    std::size_t n = 0;
    for (const auto& it : items) n += it.side == s;
    return n;
  }
  bool has_both_domains() const { return count(Domain::source) > 0 && count(Domain::target) > 0; }
  bool has_both_sides() const { return count(Side::left) > 0 && count(Side::right) > 0; }
};

// Coefficients on the raw terms of a scalar objective:
//   cls * L_cls + ae * L_ae
//   + domain_target * E_T[f_dd(f_ve(x))] + domain_source * E_S[f_dd(f_ve(x))]
//   + side_right * E_R[f_sd(f_pe(x))]    + side_left * E_L[f_sd(f_pe(x))]
struct LossTerms {
  double cls = 0.0;
  double ae = 0.0;
  double domain_target = 0.0;
  double domain_source = 0.0;
  double side_right = 0.0;
  double side_left = 0.0;
};

// Decoder input: (e_c, e_v) normally; (e_c, e_c) while pretraining before f_ve means anything.
enum class DecoderInput { pure_and_variance, pure_twice };

// Measured means; a term is absent when its partition is empty (or, for
// L_cls, when the batch holds no labeled source item).
struct LossBreakdown {
  std::optional<double> l_cls;
  std::optional<double> l_ae;
  std::optional<double> domain_target;  // E_T[f_dd(f_ve)]
  std::optional<double> domain_source;  // E_S[f_dd(f_ve)]
  std::optional<double> side_right;     // E_R[f_sd(f_pe)]
  std::optional<double> side_left;      // E_L[f_sd(f_pe)]
  double objective = 0.0;

  std::optional<double> l_d() const {
    if (!domain_target || !domain_source) return std::nullopt;
    return *domain_target - *domain_source;
  }
  std::optional<double> l_side() const {
    if (!side_right || !side_left) return std::nullopt;
    return *side_right - *side_left;
  }
};

struct ModelGradients {
  std::array<GradientSet, kPartCount> parts;

  static ModelGradients zeros_like(const DsudaModel& m) {
    ModelGradients g;
    for (std::size_t i = 0; i < kPartCount; ++i) g.parts[i] = GradientSet::zeros_like(m.nets[i]);
    return g;
  }
  GradientSet& part(Part p) { return parts[static_cast<std::size_t>(p)]; }
  const GradientSet& part(Part p) const { return parts[static_cast<std::size_t>(p)]; }
  void set_zero() {
    for (auto& p : parts) p.set_zero();
  }
  Vector flatten() const {
    Vector out;
    for (const auto& p : parts) {
      auto f = p.flatten();
      out.insert(out.end(), f.begin(), f.end());
    }
    return out;
  }
};

inline std::vector<double*> model_parameters(DsudaModel& m) {
  std::vector<double*> out;
  for (auto& n : m.nets) {
    auto p = n.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

// Evaluates every measurable term on the batch and, when `grads` is given,
// accumulates the gradient of the weighted objective into the parts listed in
// `trainable`. Frozen parts still pass gradients through to trainable ones.
inline LossBreakdown evaluate_objective(const DsudaModel& model, const Batch& batch, const LossTerms& terms,
                                        ModelGradients* grads, PartMask trainable,
                                        DecoderInput decoder_input = DecoderInput::pure_and_variance) {
  if (batch.items.empty()) throw ValueError("empty batch");
  const bool use_variance = decoder_input == DecoderInput::pure_and_variance;
  const auto n = static_cast<Eigen::Index>(batch.items.size());
  const auto latent = static_cast<Eigen::Index>(model.shape.latent);

  std::size_t n_source = 0, n_target = 0, n_left = 0, n_right = 0, n_labeled = 0;
  Matrix x(static_cast<Eigen::Index>(model.shape.input), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& it = batch.items[static_cast<std::size_t>(j)];
    if (it.x.size() != model.shape.input)
      throw ShapeError("batch item has " + std::to_string(it.x.size()) + " points, model expects " +
                       std::to_string(model.shape.input));
    x.col(j) = Eigen::Map<const Eigen::VectorXd>(it.x.data(), static_cast<Eigen::Index>(it.x.size()));
    if (it.domain == Domain::source) {
      ++n_source;
      if (it.label) {
        if (*it.label != 0 && *it.label != 1) throw ValueError("label must be 0 or 1");
        ++n_labeled;
      } else if (terms.cls != 0.0) {
        throw ValueError("unlabeled source item in a classification loss");
      }
    } else {
      ++n_target;
    }
    (it.side == Side::left ? n_left : n_right) += 1;
  }

  auto require = [](double coef, std::size_t count, const char* what) {
    if (coef != 0.0 && count == 0) throw ValueError(std::string("empty ") + what + " partition in batch");
  };
  require(terms.cls, n_labeled, "labeled source");
  require(terms.domain_target, n_target, "target");
  require(terms.domain_source, n_source, "source");
  require(terms.side_right, n_right, "right-side");
  require(terms.side_left, n_left, "left-side");
  if (!use_variance && (terms.domain_target != 0.0 || terms.domain_source != 0.0))
    throw ValueError("domain terms need the variance encoder");

  const DenseNet& pe = model.net(Part::pure_encoder);
  const DenseNet& ve = model.net(Part::variance_encoder);
  const DenseNet& de = model.net(Part::decoder);
  const DenseNet& fc = model.net(Part::classifier);
  const DenseNet& dd = model.net(Part::domain_discriminator);
  const DenseNet& sd = model.net(Part::side_discriminator);

  auto wants = [&](Part p) { return grads != nullptr && trainable.contains(p); };
  auto grad_ptr = [&](Part p) -> GradientSet* { return wants(p) ? &grads->part(p) : nullptr; };
  const bool want_pe = wants(Part::pure_encoder);
  const bool want_ve = use_variance && wants(Part::variance_encoder);

  ForwardCache c_pe, c_ve, c_de, c_fc, c_dd, c_sd;
  net_forward_batch(pe, x, c_pe);
  if (use_variance) net_forward_batch(ve, x, c_ve);
  const Matrix& e_c = c_pe.output();
  const Matrix& e_v = use_variance ? c_ve.output() : e_c;
  Matrix d_class = Matrix::Zero(latent, n);
  Matrix d_var = Matrix::Zero(latent, n);
  bool class_touched = false, var_touched = false;

  LossBreakdown out;

  // Classification over labeled source items.
  net_forward_batch(fc, e_c, c_fc);
  {
    double sum = 0.0;
    Matrix dp = Matrix::Zero(1, n);
    const double coef = n_labeled ? terms.cls / static_cast<double>(n_labeled) : 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& it = batch.items[static_cast<std::size_t>(j)];
      if (it.domain != Domain::source || !it.label) continue;
      const auto bce = binary_cross_entropy(c_fc.output()(0, j), *it.label);
      sum += bce.value;
      dp(0, j) = coef * bce.gradient;
    }
    if (n_labeled) out.l_cls = sum / static_cast<double>(n_labeled);
    if (coef != 0.0 && (wants(Part::classifier) || want_pe)) {
      d_class += net_backward_batch(fc, c_fc, dp, grad_ptr(Part::classifier));
      class_touched = true;
    }
  }

  // Reconstruction over every item.
  {
    Matrix joint(2 * latent, n);
    joint.topRows(latent) = e_c;
    joint.bottomRows(latent) = e_v;
    net_forward_batch(de, joint, c_de);
    const Matrix diff = c_de.output() - x;
    const double per_item = 1.0 / static_cast<double>(x.rows());
    out.l_ae = diff.squaredNorm() * per_item / static_cast<double>(n);
    const double coef = terms.ae / static_cast<double>(n);
    if (coef != 0.0 && (wants(Part::decoder) || want_pe || want_ve)) {
      const Matrix d_joint = net_backward_batch(de, c_de, (2.0 * coef * per_item) * diff, grad_ptr(Part::decoder));
      d_class += d_joint.topRows(latent);
      if (use_variance) {
        d_var += d_joint.bottomRows(latent);
        var_touched = true;
      } else {
        d_class += d_joint.bottomRows(latent);
      }
      class_touched = true;
    }
  }

  // Domain discriminator on the variance embedding.
  if (use_variance) {
    net_forward_batch(dd, e_v, c_dd);
    double sum_t = 0.0, sum_s = 0.0;
    Matrix ds = Matrix::Zero(1, n);
    const double coef_t = n_target ? terms.domain_target / static_cast<double>(n_target) : 0.0;
    const double coef_s = n_source ? terms.domain_source / static_cast<double>(n_source) : 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool is_target = batch.items[static_cast<std::size_t>(j)].domain == Domain::target;
      (is_target ? sum_t : sum_s) += c_dd.output()(0, j);
      ds(0, j) = is_target ? coef_t : coef_s;
    }
    if (n_target) out.domain_target = sum_t / static_cast<double>(n_target);
    if (n_source) out.domain_source = sum_s / static_cast<double>(n_source);
    if ((coef_t != 0.0 || coef_s != 0.0) && (wants(Part::domain_discriminator) || want_ve)) {
      d_var += net_backward_batch(dd, c_dd, ds, grad_ptr(Part::domain_discriminator));
      var_touched = true;
    }
  }

  // Side discriminator on the class embedding.
  {
    net_forward_batch(sd, e_c, c_sd);
    double sum_r = 0.0, sum_l = 0.0;
    Matrix ds = Matrix::Zero(1, n);
    const double coef_r = n_right ? terms.side_right / static_cast<double>(n_right) : 0.0;
    const double coef_l = n_left ? terms.side_left / static_cast<double>(n_left) : 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool is_right = batch.items[static_cast<std::size_t>(j)].side == Side::right;
      (is_right ? sum_r : sum_l) += c_sd.output()(0, j);
      ds(0, j) = is_right ? coef_r : coef_l;
    }
    if (n_right) out.side_right = sum_r / static_cast<double>(n_right);
    if (n_left) out.side_left = sum_l / static_cast<double>(n_left);
    if ((coef_r != 0.0 || coef_l != 0.0) && (wants(Part::side_discriminator) || want_pe)) {
      d_class += net_backward_batch(sd, c_sd, ds, grad_ptr(Part::side_discriminator));
      class_touched = true;
    }
  }

  if (want_pe && class_touched) net_backward_batch(pe, c_pe, d_class, grad_ptr(Part::pure_encoder));
  if (want_ve && var_touched) net_backward_batch(ve, c_ve, d_var, grad_ptr(Part::variance_encoder));

  auto term = [](double coef, const std::optional<double>& v) { return coef != 0.0 ? coef * v.value() : 0.0; };
  out.objective = term(terms.cls, out.l_cls) + term(terms.ae, out.l_ae) +
                  term(terms.domain_target, out.domain_target) + term(terms.domain_source, out.domain_source) +
                  term(terms.side_right, out.side_right) + term(terms.side_left, out.side_left);
  return out;
}

// Objective minimized by the discriminators: -L_DS = -(L_d + eta * L_side).
inline LossTerms discriminator_terms(const LossWeights& w, bool with_side = true) {
  LossTerms t;
  t.domain_target = -1.0;
  t.domain_source = 1.0;
  if (with_side) {
    t.side_right = -w.eta;
    t.side_left = w.eta;
  }
  return t;
}

// L_DAE = alpha * L'_d + beta * L'_side + L_ae + L_cls.
// confuse: L'_d = E_T[f_dd(f_ve)],  L'_side = -E_L[f_sd(f_pe)]
// literal: L'_d = -E_T[f_dd(f_ve)], L'_side = +E_L[f_sd(f_pe)]
inline LossTerms autoencoder_terms(const LossWeights& w, bool with_side = true) {
  LossTerms t;
  t.cls = 1.0;
  t.ae = 1.0;
  const double sign = w.sign == SignConvention::confuse ? 1.0 : -1.0;
  t.domain_target = sign * w.alpha;
  if (with_side) t.side_left = -sign * w.beta;
  return t;
}

inline double loss_cls(const DsudaModel& model, const Batch& batch) {
  LossTerms t;
  t.cls = 1.0;
  for (const auto& it : batch.items)
    if (it.domain == Domain::source && !it.label) throw ValueError("unlabeled source item in L_cls");
  return evaluate_objective(model, batch, t, nullptr, {}).objective;
}

inline double loss_ae(const DsudaModel& model, const Batch& batch) {
  LossTerms t;
  t.ae = 1.0;
  return evaluate_objective(model, batch, t, nullptr, {}).objective;
}

struct DiscriminatorLosses {
  double l_d = 0.0;
  double l_side = 0.0;
  double l_ds = 0.0;
};

inline DiscriminatorLosses loss_ds(const DsudaModel& model, const Batch& batch, const LossWeights& w) {
  if (!batch.has_both_domains()) throw ValueError("discriminating loss needs source and target items");
  if (!batch.has_both_sides()) throw ValueError("discriminating loss needs left and right items");
  const auto b = evaluate_objective(model, batch, {}, nullptr, {});
  const double l_d = *b.l_d(), l_side = *b.l_side();
  return {l_d, l_side, l_d + w.eta * l_side};
}

struct AutoencoderLosses {
  double l_dae = 0.0;
  double l_cls = 0.0;
  double l_ae = 0.0;
  double l_d_prime = 0.0;     // adversarial domain component before alpha
  double l_side_prime = 0.0;  // adversarial side component before beta
};

inline AutoencoderLosses loss_dae(const DsudaModel& model, const Batch& batch, const LossWeights& w) {
  if (!batch.has_both_domains()) throw ValueError("autoencoder loss needs source and target items");
  if (!batch.has_both_sides()) throw ValueError("autoencoder loss needs left and right items");
  LossTerms t;
  t.cls = 1.0;
  for (const auto& it : batch.items)
    if (it.domain == Domain::source && !it.label) throw ValueError("unlabeled source item in L_cls");
  const auto b = evaluate_objective(model, batch, t, nullptr, {});
  const double sign = w.sign == SignConvention::confuse ? 1.0 : -1.0;
  AutoencoderLosses r;
  r.l_cls = *b.l_cls;
  r.l_ae = *b.l_ae;
  r.l_d_prime = sign * *b.domain_target;
  r.l_side_prime = -sign * *b.side_left;
  r.l_dae = w.alpha * r.l_d_prime + w.beta * r.l_side_prime + r.l_ae + r.l_cls;
  return r;
}

}  // namespace dsuda
