#pragma once

// Aligns source trials to the target recording geometry: a sliding window
// whose span equals the target duration, windowed-mean down-sampling to the
// target point count, then per-trial min-max normalization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dsuda/error.hpp"
#include "dsuda/trial.hpp"

namespace dsuda {

struct PreprocessConfig {
  double source_duration_ms = 10.0;
  double target_duration_ms = 8.0;
  std::size_t source_points = 500;
  std::size_t target_points = 131;
  std::size_t slide_step = 20;

  // Points of a source trial covering one target duration.
  std::size_t window_points() const {
    return static_cast<std::size_t>(
        std::llround(target_duration_ms * static_cast<double>(source_points) / source_duration_ms));
  }
  // Narrow down-sampling width.
  std::size_t compress_step() const { return window_points() / target_points; }
  // Number of down-sampling windows that are one point wider.
  std::size_t residual() const { return window_points() - compress_step() * target_points; }

  std::size_t segment_count() const { return (source_points - window_points()) / slide_step + 1; }

  void validate() const {
    if (!(source_duration_ms > 0.0) || !(target_duration_ms > 0.0))
      throw ValueError("trial durations must be positive");
    if (source_duration_ms < target_duration_ms)
      throw ValueError("source duration must be at least the target duration");
    if (source_points < 2 || target_points < 2) throw ValueError("trials need at least two points");
    if (slide_step < 1) throw ValueError("slide_step must be at least 1");
    if (window_points() > source_points)
      throw ValueError("window of " + std::to_string(window_points()) + " points exceeds the " +
                       std::to_string(source_points) + "-point source trial");
    if (window_points() < target_points)
      throw ValueError("window of " + std::to_string(window_points()) +
                       " points is shorter than the target trial; align target to source instead");
  }
};

// Windows of `window` points starting at 0, step, 2*step, ... that fit in the trial.
inline std::vector<Vector> slide_window(std::span<const double> samples, std::size_t window, std::size_t step) {
  if (step < 1) throw ValueError("slide step must be at least 1");
  if (window < 1) throw ValueError("window must be at least 1 point");
  if (window > samples.size())
    throw ValueError("window of " + std::to_string(window) + " points exceeds the " +
                     std::to_string(samples.size()) + "-point trial");
  std::vector<Vector> out;
  for (std::size_t start = 0; start + window <= samples.size(); start += step)
    out.emplace_back(samples.begin() + static_cast<std::ptrdiff_t>(start),
                     samples.begin() + static_cast<std::ptrdiff_t>(start + window));
  return out;
}

inline std::vector<Vector> slide_window(const RawTrial& trial, const PreprocessConfig& cfg) {
  if (trial.domain != Domain::source) throw ValueError("only source trials are windowed (trial " + trial.id + ")");
  return slide_window(trial.samples, cfg.window_points(), cfg.slide_step);
}

// Widths of the contiguous mean-pooling windows: the first n_out - r are
// floor(n_in / n_out) wide, the last r are one wider. They sum to n_in.
inline std::vector<std::size_t> downsample_widths(std::size_t n_in, std::size_t n_out) {
  if (n_out == 0) throw ValueError("cannot down-sample to zero points");
  if (n_in < n_out)
    throw ValueError("cannot down-sample " + std::to_string(n_in) + " points to " + std::to_string(n_out));
  const std::size_t narrow = n_in / n_out;
  const std::size_t wide_count = n_in - narrow * n_out;
  std::vector<std::size_t> widths(n_out, narrow);
  for (std::size_t p = n_out - wide_count; p < n_out; ++p) widths[p] = narrow + 1;
  return widths;
}

inline Vector downsample(std::span<const double> segment, std::size_t n_out) {
  const auto widths = downsample_widths(segment.size(), n_out);
  Vector out(n_out);
  std::size_t q = 0;
  for (std::size_t p = 0; p < n_out; ++p) {
    double sum = 0.0;
    for (std::size_t k = 0; k < widths[p]; ++k) sum += segment[q++];
    out[p] = sum / static_cast<double>(widths[p]);
  }
  return out;
}

struct NormalizedSamples {
  Vector values;
  bool degenerate = false;
};

// (v - min) / (max - min); a constant vector maps to zeros and is flagged.
inline NormalizedSamples min_max_norm(std::span<const double> samples) {
  if (samples.empty()) throw ValueError("cannot normalize an empty trial");
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  NormalizedSamples r{Vector(samples.size(), 0.0), false};
  if (!(range > 0.0)) {
    r.degenerate = true;
    return r;
  }
  for (std::size_t i = 0; i < samples.size(); ++i) r.values[i] = (samples[i] - lo) / range;
  return r;
}

struct AlignedDataset {
  std::vector<ProcessedTrial> source;
  std::vector<ProcessedTrial> target;
  std::size_t degenerate_count = 0;
};

namespace detail {
inline bool same_duration(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); }

inline ProcessedTrial make_processed(const RawTrial& t, std::size_t origin, std::size_t segment, Vector samples,
                                     double duration_ms, AlignedDataset& out) {
  auto norm = min_max_norm(samples);
  if (norm.degenerate) ++out.degenerate_count;
  return {t.subject_id, t.domain, t.side, t.label, duration_ms, std::move(norm.values), origin, segment,
          norm.degenerate};
}
}  // namespace detail

// Windows and down-samples every source trial, normalizes both domains.
// cfg's geometry must match the trials; target trials are only normalized.
inline AlignedDataset align_dataset(const std::vector<RawTrial>& source, const std::vector<RawTrial>& target,
                                    const PreprocessConfig& cfg) {
  cfg.validate();
  AlignedDataset out;
  const std::size_t window = cfg.window_points();
  for (std::size_t i = 0; i < source.size(); ++i) {
    const RawTrial& t = source[i];
    if (t.domain != Domain::source) throw ValueError("trial " + t.id + " in the source set is tagged target");
    if (t.samples.size() != cfg.source_points || !detail::same_duration(t.duration_ms, cfg.source_duration_ms))
      throw ShapeError("source trial " + t.id + " has " + std::to_string(t.samples.size()) + " points over " +
                       std::to_string(t.duration_ms) + " ms; expected " + std::to_string(cfg.source_points) +
                       " over " + std::to_string(cfg.source_duration_ms) + " ms");
    if (!t.label) throw ValueError("source trial " + t.id + " is unlabeled");
    auto segments = slide_window(t.samples, window, cfg.slide_step);
    for (std::size_t s = 0; s < segments.size(); ++s)
      out.source.push_back(
          detail::make_processed(t, i, s, downsample(segments[s], cfg.target_points), cfg.target_duration_ms, out));
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    const RawTrial& t = target[i];
    if (t.domain != Domain::target) throw ValueError("trial " + t.id + " in the target set is tagged source");
    if (t.samples.size() != cfg.target_points || !detail::same_duration(t.duration_ms, cfg.target_duration_ms))
      throw ShapeError("target trial " + t.id + " has " + std::to_string(t.samples.size()) + " points over " +
                       std::to_string(t.duration_ms) + " ms; expected " + std::to_string(cfg.target_points) +
                       " over " + std::to_string(cfg.target_duration_ms) + " ms");
    out.target.push_back(detail::make_processed(t, i, 0, t.samples, t.duration_ms, out));
  }
  return out;
}

// Geometry taken from the first trial of each domain, with the given slide step.
inline PreprocessConfig infer_geometry(const std::vector<RawTrial>& source, const std::vector<RawTrial>& target,
                                       std::size_t slide_step) {
  if (target.empty()) throw ValueError("cannot infer geometry without target trials");
  PreprocessConfig cfg;
  cfg.slide_step = slide_step;
  cfg.target_points = target.front().samples.size();
  cfg.target_duration_ms = target.front().duration_ms;
  const RawTrial& ref = source.empty() ? target.front() : source.front();
  cfg.source_points = ref.samples.size();
  cfg.source_duration_ms = ref.duration_ms;
  return cfg;
}

}  // namespace dsuda
