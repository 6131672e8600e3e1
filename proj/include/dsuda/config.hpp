#pragma once

// Run configuration file: plain text, `key = value` lines grouped under
// [preprocess], [model], [trainer], [weights] and [synth]. `#` starts a
// comment. Unknown sections or keys are errors.

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dsuda/error.hpp"
#include "dsuda/io.hpp"
#include "dsuda/model.hpp"
#include "dsuda/preprocess.hpp"
#include "dsuda/synth.hpp"
#include "dsuda/trainer.hpp"

namespace dsuda {

struct RunConfig {
  PreprocessConfig preprocess;
  // Take points and durations from the data files instead of [preprocess].
  bool infer_geometry = true;
  ModelShape model;
  TrainConfig trainer;
  SynthConfig synth;

  void validate() const {
    if (!infer_geometry) preprocess.validate();
    model.validate();
    trainer.validate();
    synth.validate();
  }
};

namespace detail {
inline bool parse_bool(std::string_view v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValueError(where + ": expected true or false, got '" + std::string(v) + "'");
}

inline std::size_t parse_count(std::string_view v, const std::string& where) {
  const long long n = parse_integer(v, where);
  if (n < 0) throw ValueError(where + ": must be non-negative");
  return static_cast<std::size_t>(n);
}

inline double parse_number(std::string_view v, const std::string& where) {
  const double d = parse_real(v, where);
  if (!std::isfinite(d)) throw ValueError(where + ": must be finite");
  return d;
}

inline std::vector<double> parse_real_list(std::string_view v, const std::string& where) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (auto part : split(v, ',')) out.push_back(parse_number(trim(part), where));
  return out;
}

// "amplitude:hz:phase, amplitude:hz:phase, ..."
inline std::vector<Sinusoid> parse_sinusoids(std::string_view v, const std::string& where) {
  std::vector<Sinusoid> out;
  for (auto part : split(v, ',')) {
    const auto fields = split(trim(part), ':');
    if (fields.size() != 3) throw ValueError(where + ": expected amplitude:hz:phase, got '" + trim(part) + "'");
    out.push_back({parse_number(trim(fields[0]), where), parse_number(trim(fields[1]), where),
                   parse_number(trim(fields[2]), where)});
  }
  return out;
}

inline std::string format_sinusoids(const std::vector<Sinusoid>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ", ";
    out += format_real(parts[i].amplitude) + ':' + format_real(parts[i].frequency_hz) + ':' + format_real(parts[i].phase);
  }
  return out;
}

inline std::string format_real_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_real(v[i]);
  return out;
}

struct ConfigKey {
  std::function<void(RunConfig&, std::string_view, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using KeyTable = std::map<std::string, ConfigKey, std::less<>>;

// "section.key" -> accessor.
inline const KeyTable& config_keys() {
  static const KeyTable table = [] {
    KeyTable t;
    auto real = [&t](const std::string& name, auto member) {
      t[name] = {[member](RunConfig& c, std::string_view v, const std::string& w) { member(c) = parse_number(v, w); },
                 [member](const RunConfig& c) { return format_real(member(const_cast<RunConfig&>(c))); }};
    };
    auto count = [&t](const std::string& name, auto member) {
      t[name] = {[member](RunConfig& c, std::string_view v, const std::string& w) { member(c) = parse_count(v, w); },
                 [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
    };
    auto flag = [&t](const std::string& name, auto member) {
      t[name] = {[member](RunConfig& c, std::string_view v, const std::string& w) { member(c) = parse_bool(v, w); },
                 [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
    };

    real("preprocess.source_duration_ms", [](RunConfig& c) -> double& { return c.preprocess.source_duration_ms; });
    real("preprocess.target_duration_ms", [](RunConfig& c) -> double& { return c.preprocess.target_duration_ms; });
    count("preprocess.source_points", [](RunConfig& c) -> std::size_t& { return c.preprocess.source_points; });
    count("preprocess.target_points", [](RunConfig& c) -> std::size_t& { return c.preprocess.target_points; });
    count("preprocess.slide_step", [](RunConfig& c) -> std::size_t& { return c.preprocess.slide_step; });
    flag("preprocess.infer_geometry", [](RunConfig& c) -> bool& { return c.infer_geometry; });

    count("model.input", [](RunConfig& c) -> std::size_t& { return c.model.input; });
    count("model.encoder_hidden", [](RunConfig& c) -> std::size_t& { return c.model.encoder_hidden; });
    count("model.latent", [](RunConfig& c) -> std::size_t& { return c.model.latent; });
    count("model.decoder_hidden", [](RunConfig& c) -> std::size_t& { return c.model.decoder_hidden; });
    count("model.head_hidden", [](RunConfig& c) -> std::size_t& { return c.model.head_hidden; });

    real("trainer.lr_dae", [](RunConfig& c) -> double& { return c.trainer.lr_dae; });
    real("trainer.lr_suda", [](RunConfig& c) -> double& { return c.trainer.lr_suda; });
    count("trainer.steps_dae", [](RunConfig& c) -> std::size_t& { return c.trainer.steps_dae; });
    count("trainer.steps_suda", [](RunConfig& c) -> std::size_t& { return c.trainer.steps_suda; });
    count("trainer.batch_size", [](RunConfig& c) -> std::size_t& { return c.trainer.batch_size; });
    count("trainer.pretrain_epochs", [](RunConfig& c) -> std::size_t& { return c.trainer.pretrain_epochs; });
    count("trainer.adversarial_epochs", [](RunConfig& c) -> std::size_t& { return c.trainer.adversarial_epochs; });
    t["trainer.seed"] = {[](RunConfig& c, std::string_view v, const std::string& w) {
                           c.trainer.seed = static_cast<std::uint64_t>(parse_count(v, w));
                         },
                         [](const RunConfig& c) { return std::to_string(c.trainer.seed); }};
    t["trainer.optimizer"] = {[](RunConfig& c, std::string_view v, const std::string& w) {
                                if (v == "adam")
                                  c.trainer.optimizer = OptimizerKind::adam;
                                else if (v == "sgd")
                                  c.trainer.optimizer = OptimizerKind::sgd;
                                else
                                  throw ValueError(w + ": expected adam or sgd, got '" + std::string(v) + "'");
                              },
                              [](const RunConfig& c) {
                                return std::string(c.trainer.optimizer == OptimizerKind::adam ? "adam" : "sgd");
                              }};
    flag("trainer.record_time", [](RunConfig& c) -> bool& { return c.trainer.record_time; });

    real("weights.alpha", [](RunConfig& c) -> double& { return c.trainer.weights.alpha; });
    real("weights.beta", [](RunConfig& c) -> double& { return c.trainer.weights.beta; });
    real("weights.eta", [](RunConfig& c) -> double& { return c.trainer.weights.eta; });
    t["weights.sign_convention"] = {
        [](RunConfig& c, std::string_view v, const std::string& w) {
          try {
            c.trainer.weights.sign = parse_sign_convention(v);
          } catch (const ValueError& e) {
            throw ValueError(w + ": " + e.what());
          }
        },
        [](const RunConfig& c) { return std::string(to_string(c.trainer.weights.sign)); }};

    count("synth.n_points", [](RunConfig& c) -> std::size_t& { return c.synth.n_points; });
    real("synth.duration_ms", [](RunConfig& c) -> double& { return c.synth.duration_ms; });
    count("synth.source_subjects", [](RunConfig& c) -> std::size_t& { return c.synth.source_subjects; });
    count("synth.target_subjects", [](RunConfig& c) -> std::size_t& { return c.synth.target_subjects; });
    count("synth.source_trials_per_subject",
          [](RunConfig& c) -> std::size_t& { return c.synth.source_trials_per_subject; });
    t["synth.class0_template"] = {
        [](RunConfig& c, std::string_view v, const std::string& w) { c.synth.class0_template = parse_sinusoids(v, w); },
        [](const RunConfig& c) { return format_sinusoids(c.synth.class0_template); }};
    t["synth.class1_template"] = {
        [](RunConfig& c, std::string_view v, const std::string& w) { c.synth.class1_template = parse_sinusoids(v, w); },
        [](const RunConfig& c) { return format_sinusoids(c.synth.class1_template); }};
    t["synth.subject_basis_hz"] = {
        [](RunConfig& c, std::string_view v, const std::string& w) { c.synth.subject_basis_hz = parse_real_list(v, w); },
        [](const RunConfig& c) { return format_real_list(c.synth.subject_basis_hz); }};
    real("synth.subject_sigma", [](RunConfig& c) -> double& { return c.synth.subject_sigma; });
    real("synth.target_gain", [](RunConfig& c) -> double& { return c.synth.target_gain; });
    real("synth.target_offset", [](RunConfig& c) -> double& { return c.synth.target_offset; });
    real("synth.drift_amplitude", [](RunConfig& c) -> double& { return c.synth.drift_amplitude; });
    real("synth.drift_hz", [](RunConfig& c) -> double& { return c.synth.drift_hz; });
    real("synth.drift_phase", [](RunConfig& c) -> double& { return c.synth.drift_phase; });
    real("synth.side_latency_ms", [](RunConfig& c) -> double& { return c.synth.side_latency_ms; });
    real("synth.noise_sigma", [](RunConfig& c) -> double& { return c.synth.noise_sigma; });
    t["synth.seed"] = {[](RunConfig& c, std::string_view v, const std::string& w) {
                         c.synth.seed = static_cast<std::uint64_t>(parse_count(v, w));
                       },
                       [](const RunConfig& c) { return std::to_string(c.synth.seed); }};
    return t;
  }();
  return table;
}

inline constexpr std::array<std::string_view, 5> kConfigSections = {"preprocess", "model", "trainer", "weights",
                                                                    "synth"};
}  // namespace detail

// Sets one `section.key`; throws naming the key on unknown keys or bad values.
inline void set_config_value(RunConfig& cfg, std::string_view dotted_key, std::string_view value) {
  const auto& keys = detail::config_keys();
  const auto it = keys.find(dotted_key);
  if (it == keys.end()) throw ValueError("unknown config key '" + std::string(dotted_key) + "'");
  try {
    it->second.set(cfg, trim(value), std::string(dotted_key));
  } catch (const FormatError& e) {
    throw ValueError(e.what());
  }
}

inline std::string get_config_value(const RunConfig& cfg, std::string_view dotted_key) {
  const auto& keys = detail::config_keys();
  const auto it = keys.find(dotted_key);
  if (it == keys.end()) throw ValueError("unknown config key '" + std::string(dotted_key) + "'");
  return it->second.get(cfg);
}

// Parses and validates. Errors carry `name:line` and the offending key.
inline RunConfig parse_run_config(std::string_view text, const std::string& name = "config") {
  RunConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    const std::string where = name + ":" + std::to_string(line_no);
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValueError(where + ": malformed section header '" + line + "'");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (std::find(detail::kConfigSections.begin(), detail::kConfigSections.end(), section) ==
          detail::kConfigSections.end())
        throw ValueError(where + ": unknown config section '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValueError(where + ": expected key = value, got '" + line + "'");
    if (section.empty()) throw ValueError(where + ": key outside of any section");
    const std::string key = section + "." + trim(std::string_view(line).substr(0, eq));
    try {
      set_config_value(cfg, key, std::string_view(line).substr(eq + 1));
    } catch (const std::exception& e) {
      throw ValueError(where + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ValueError(name + ": " + e.what());
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path), path.filename().string());
}

// Every key with its current value, grouped by section; parses back to `cfg`.
inline std::string format_run_config(const RunConfig& cfg) {
  std::string out;
  for (auto section : detail::kConfigSections) {
    out += "[" + std::string(section) + "]\n";
    for (const auto& [key, access] : detail::config_keys()) {
      if (key.compare(0, section.size() + 1, std::string(section) + ".") != 0) continue;
      out += key.substr(section.size() + 1) + " = " + access.get(cfg) + "\n";
    }
    out += "\n";
  }
  return out;
}

}  // namespace dsuda
