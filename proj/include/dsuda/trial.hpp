#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "dsuda/error.hpp"
#include "dsuda/nn.hpp"

namespace dsuda {

enum class Domain { source, target };
enum class Side { left = 0, right = 1 };

inline std::string_view to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

inline Domain parse_domain(std::string_view s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw ValueError("domain must be 'source' or 'target', got '" + std::string(s) + "'");
}

inline int side_index(Side s) { return static_cast<int>(s); }

inline Side side_from_index(int v) {
  if (v == 0) return Side::left;
  if (v == 1) return Side::right;
  throw ValueError("side must be 0 (left) or 1 (right), got " + std::to_string(v));
}

// One recorded trial as it arrives from a dataset.
// label: 0 = control, 1 = tinnitus; absent for unlabeled target data.
struct RawTrial {
  std::string subject_id;
  Domain domain = Domain::source;
  Side side = Side::left;
  std::optional<int> label;
  double duration_ms = 0.0;
  Vector samples;
  std::string id;  // used in diagnostics only
};

// A trial aligned to the target geometry and min-max normalized.
struct ProcessedTrial {
  std::string subject_id;
  Domain domain = Domain::source;
  Side side = Side::left;
  std::optional<int> label;
  double duration_ms = 0.0;
  Vector samples;
  std::size_t origin = 0;         // index of the raw trial this came from
  std::size_t segment_index = 0;  // window index within the origin trial
  bool degenerate = false;        // constant segment, normalized to all zeros
};

}  // namespace dsuda
