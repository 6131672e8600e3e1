#pragma once

// Checkpoints are JSON documents. Parameters are stored as decimal strings
// with 17 significant digits so that loading reproduces every bit.

#include <cmath>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "dsuda/error.hpp"
#include "dsuda/io.hpp"
#include "dsuda/model.hpp"
#include "dsuda/nn.hpp"
#include "dsuda/trainer.hpp"

namespace dsuda {

inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointFormat = "dsuda-checkpoint";

struct Checkpoint {
  DsudaModel model;
  TrainConfig config;
};

namespace detail {
using Json = nlohmann::ordered_json;

inline Json reals_to_json(const Vector& v, const std::string& where) {
  Json out = Json::array();
  for (double d : v) {
    if (!std::isfinite(d)) throw NonFiniteError("non-finite parameter in " + where);
    out.push_back(format_real17(d));
  }
  return out;
}

inline Vector reals_from_json(const Json& j, std::size_t expected, const std::string& where) {
  if (!j.is_array()) throw FormatError(where + ": expected an array");
  if (j.size() != expected)
    throw FormatError(where + ": expected " + std::to_string(expected) + " values, found " + std::to_string(j.size()));
  Vector out;
  out.reserve(expected);
  for (const auto& e : j) {
    if (!e.is_string()) throw FormatError(where + ": parameters must be decimal strings");
    const double v = parse_real(e.get<std::string>(), where);
    if (!std::isfinite(v)) throw NonFiniteError("non-finite parameter in " + where);
    out.push_back(v);
  }
  return out;
}

template <typename T>
T field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(where + ": '" + key + "' has the wrong type");
  }
}

inline Json net_to_json(const DenseNet& net, const std::string& where) {
  Json layers = Json::array();
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    const std::string at = where + " layer " + std::to_string(i);
    layers.push_back(Json{{"inputs", l.inputs},
                          {"outputs", l.outputs},
                          {"activation", std::string(to_string(l.activation))},
                          {"weights", reals_to_json(l.weights, at)},
                          {"bias", reals_to_json(l.bias, at)}});
  }
  return layers;
}

inline DenseNet net_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw FormatError(where + ": expected a non-empty layer list");
  DenseNet net;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = where + " layer " + std::to_string(i);
    DenseLayer l;
    l.inputs = field<std::size_t>(j[i], "inputs", at);
    l.outputs = field<std::size_t>(j[i], "outputs", at);
    l.activation = parse_activation(field<std::string>(j[i], "activation", at));
    l.weights = reals_from_json(j[i].contains("weights") ? j[i]["weights"] : Json(), l.inputs * l.outputs, at);
    l.bias = reals_from_json(j[i].contains("bias") ? j[i]["bias"] : Json(), l.outputs, at);
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}
}  // namespace detail

inline std::string format_checkpoint(const DsudaModel& model, const TrainConfig& cfg) {
  using detail::Json;
  model.validate();
  Json doc;
  doc["format"] = kCheckpointFormat;
  doc["version"] = kCheckpointVersion;
  doc["seed"] = cfg.seed;
  doc["shape"] = Json{{"input", model.shape.input},
                      {"encoder_hidden", model.shape.encoder_hidden},
                      {"latent", model.shape.latent},
                      {"decoder_hidden", model.shape.decoder_hidden},
                      {"head_hidden", model.shape.head_hidden}};
  doc["weights"] = Json{{"alpha", format_real17(cfg.weights.alpha)},
                        {"beta", format_real17(cfg.weights.beta)},
                        {"eta", format_real17(cfg.weights.eta)},
                        {"sign_convention", std::string(to_string(cfg.weights.sign))}};
  doc["trainer"] = Json{{"lr_dae", format_real17(cfg.lr_dae)},
                        {"lr_suda", format_real17(cfg.lr_suda)},
                        {"steps_dae", cfg.steps_dae},
                        {"steps_suda", cfg.steps_suda},
                        {"batch_size", cfg.batch_size},
                        {"pretrain_epochs", cfg.pretrain_epochs},
                        {"adversarial_epochs", cfg.adversarial_epochs},
                        {"optimizer", cfg.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
                        {"record_time", cfg.record_time}};
  Json nets = Json::object();
  for (Part p : kAllParts) nets[std::string(to_string(p))] = detail::net_to_json(model.net(p), std::string(to_string(p)));
  doc["nets"] = std::move(nets);
  return doc.dump(1) + "\n";
}

inline Checkpoint parse_checkpoint(std::string_view text) {
  using detail::field;
  using detail::Json;
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint is not valid JSON (truncated?): ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format") || doc["format"] != kCheckpointFormat)
    throw FormatError("not a dsuda checkpoint");
  const int version = field<int>(doc, "version", "checkpoint");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");

  Checkpoint ck;
  const Json& shape = doc.contains("shape") ? doc["shape"] : Json();
  ck.model.shape.input = field<std::size_t>(shape, "input", "shape");
  ck.model.shape.encoder_hidden = field<std::size_t>(shape, "encoder_hidden", "shape");
  ck.model.shape.latent = field<std::size_t>(shape, "latent", "shape");
  ck.model.shape.decoder_hidden = field<std::size_t>(shape, "decoder_hidden", "shape");
  ck.model.shape.head_hidden = field<std::size_t>(shape, "head_hidden", "shape");

  auto real = [](const Json& j, const char* key, const std::string& where) {
    return parse_real(field<std::string>(j, key, where), where + "." + key);
  };
  TrainConfig& c = ck.config;
  c.seed = field<std::uint64_t>(doc, "seed", "checkpoint");
  const Json& w = doc.contains("weights") ? doc["weights"] : Json();
  c.weights.alpha = real(w, "alpha", "weights");
  c.weights.beta = real(w, "beta", "weights");
  c.weights.eta = real(w, "eta", "weights");
  c.weights.sign = parse_sign_convention(field<std::string>(w, "sign_convention", "weights"));
  const Json& t = doc.contains("trainer") ? doc["trainer"] : Json();
  c.lr_dae = real(t, "lr_dae", "trainer");
  c.lr_suda = real(t, "lr_suda", "trainer");
  c.steps_dae = field<std::size_t>(t, "steps_dae", "trainer");
  c.steps_suda = field<std::size_t>(t, "steps_suda", "trainer");
  c.batch_size = field<std::size_t>(t, "batch_size", "trainer");
  c.pretrain_epochs = field<std::size_t>(t, "pretrain_epochs", "trainer");
  c.adversarial_epochs = field<std::size_t>(t, "adversarial_epochs", "trainer");
  const auto opt = field<std::string>(t, "optimizer", "trainer");
  if (opt != "adam" && opt != "sgd") throw FormatError("trainer.optimizer: unknown optimizer '" + opt + "'");
  c.optimizer = opt == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
  c.record_time = field<bool>(t, "record_time", "trainer");

  const Json& nets = doc.contains("nets") ? doc["nets"] : Json();
  for (Part p : kAllParts) {
    const std::string name(to_string(p));
    if (!nets.is_object() || !nets.contains(name)) throw FormatError("checkpoint lacks network '" + name + "'");
    ck.model.net(p) = detail::net_from_json(nets[name], name);
  }
  ck.model.validate();
  c.validate();
  return ck;
}

inline void save_checkpoint(const DsudaModel& model, const TrainConfig& cfg, const std::filesystem::path& path) {
  write_file_atomic(path, format_checkpoint(model, cfg));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

}  // namespace dsuda
