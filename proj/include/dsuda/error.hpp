#pragma once

#include <stdexcept>
#include <string>

namespace dsuda {

// Dimension or layout mismatch between a value and what an operation expects.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A value outside its allowed domain (non-binary label, negative weight, ...).
struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// NaN or infinity where only finite reals are allowed.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file (CSV row, config key, checkpoint document).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training could not proceed (e.g. a batch partition stayed empty for a whole epoch).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dsuda
