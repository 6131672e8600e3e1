#pragma once

// Dataset CSV reading/writing and atomic file output.
//
// Raw schema:       subject_id,domain,side,label,duration_ms,s0,s1,...
// Processed schema: subject_id,domain,side,label,duration_ms,segment_index,s0,s1,...
// label is empty for unlabeled trials.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dsuda/error.hpp"
#include "dsuda/trial.hpp"

namespace dsuda {

// Shortest decimal text that parses back to exactly `v`.
inline std::string format_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw FormatError("cannot format real");
  return std::string(buf, end);
}

// Fixed 17 significant digits.
inline std::string format_real17(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc()) throw FormatError("cannot format real");
  return std::string(buf, end);
}

inline double parse_real(std::string_view s, const std::string& where) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw FormatError(where + ": '" + std::string(s) + "' is not a decimal real");
  return v;
}

inline long long parse_integer(std::string_view s, const std::string& where) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw FormatError(where + ": '" + std::string(s) + "' is not an integer");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Writes to a sibling temp file, then renames over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {
inline void append_row_prefix(std::string& out, const std::string& subject, Domain domain, Side side,
                              const std::optional<int>& label, double duration_ms) {
  if (subject.find_first_of(",\n\r") != std::string::npos)
    throw FormatError("subject id '" + subject + "' contains a separator");
  out += subject;
  out += ',';
  out += to_string(domain);
  out += ',';
  out += std::to_string(side_index(side));
  out += ',';
  if (label) out += std::to_string(*label);
  out += ',';
  out += format_real(duration_ms);
}

inline void append_samples(std::string& out, const Vector& samples) {
  for (double v : samples) {
    out += ',';
    out += format_real(v);
  }
  out += '\n';
}

inline std::string header(std::size_t points, bool with_segment) {
  std::string h = "subject_id,domain,side,label,duration_ms";
  if (with_segment) h += ",segment_index";
  for (std::size_t i = 0; i < points; ++i) h += ",s" + std::to_string(i);
  h += '\n';
  return h;
}
}  // namespace detail

inline std::string format_raw_csv(const std::vector<RawTrial>& trials) {
  std::string out = detail::header(trials.empty() ? 0 : trials.front().samples.size(), false);
  for (const auto& t : trials) {
    detail::append_row_prefix(out, t.subject_id, t.domain, t.side, t.label, t.duration_ms);
    detail::append_samples(out, t.samples);
  }
  return out;
}

inline std::string format_processed_csv(const std::vector<ProcessedTrial>& trials) {
  std::string out = detail::header(trials.empty() ? 0 : trials.front().samples.size(), true);
  for (const auto& t : trials) {
    detail::append_row_prefix(out, t.subject_id, t.domain, t.side, t.label, t.duration_ms);
    out += ',';
    out += std::to_string(t.segment_index);
    detail::append_samples(out, t.samples);
  }
  return out;
}

// Parsed rows of either schema. Processed rows carry their segment index.
struct DatasetTable {
  bool has_segment_index = false;
  std::vector<ProcessedTrial> rows;
};

// Parses a dataset CSV. `name` is used in diagnostics ("file.csv row 7: ...").
// Rows may have different sample counts; shape checks belong to the consumer.
inline DatasetTable parse_dataset_csv(std::string_view text, const std::string& name) {
  DatasetTable table;
  std::size_t line_no = 0;
  std::size_t header_fields = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    const std::string where = name + " row " + std::to_string(line_no);
    if (header_fields == 0) {
      if (fields.size() < 5 || fields[0] != "subject_id" || fields[1] != "domain" || fields[2] != "side" ||
          fields[3] != "label" || fields[4] != "duration_ms")
        throw FormatError(where + ": header must start with subject_id,domain,side,label,duration_ms");
      table.has_segment_index = fields.size() > 5 && fields[5] == "segment_index";
      header_fields = fields.size();
      continue;
    }
    const std::size_t first_sample = table.has_segment_index ? 6 : 5;
    if (fields.size() < first_sample + 2)
      throw FormatError(where + ": expected at least two samples, found " +
                        std::to_string(fields.size() < first_sample ? 0 : fields.size() - first_sample));
    ProcessedTrial t;
    t.subject_id = std::string(fields[0]);
    if (t.subject_id.empty()) throw FormatError(where + ": empty subject_id");
    try {
      t.domain = parse_domain(fields[1]);
      t.side = side_from_index(static_cast<int>(parse_integer(fields[2], where + " side")));
      if (!fields[3].empty()) {
        const auto label = parse_integer(fields[3], where + " label");
        if (label != 0 && label != 1) throw ValueError("label must be 0 or 1");
        t.label = static_cast<int>(label);
      }
    } catch (const std::invalid_argument& e) {
      throw FormatError(where + ": " + e.what());
    }
    t.duration_ms = parse_real(fields[4], where + " duration_ms");
    if (!(t.duration_ms > 0.0)) throw FormatError(where + ": duration_ms must be positive");
    if (table.has_segment_index) {
      const auto seg = parse_integer(fields[5], where + " segment_index");
      if (seg < 0) throw FormatError(where + ": negative segment_index");
      t.segment_index = static_cast<std::size_t>(seg);
    }
    t.samples.reserve(fields.size() - first_sample);
    for (std::size_t i = first_sample; i < fields.size(); ++i) {
      const double v = parse_real(fields[i], where + " column " + std::to_string(i + 1));
      if (!std::isfinite(v)) throw FormatError(where + ": non-finite sample");
      t.samples.push_back(v);
    }
    t.origin = table.rows.size();
    table.rows.push_back(std::move(t));
  }
  if (header_fields == 0) throw FormatError(name + ": missing header");
  return table;
}

inline std::vector<RawTrial> to_raw_trials(const DatasetTable& table, const std::string& name) {
  std::vector<RawTrial> out;
  out.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    out.push_back({r.subject_id, r.domain, r.side, r.label, r.duration_ms, r.samples,
                   name + " row " + std::to_string(i + 2)});
  }
  return out;
}

inline DatasetTable read_dataset_csv(const std::filesystem::path& path) {
  return parse_dataset_csv(read_file(path), path.filename().string());
}

}  // namespace dsuda
