#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "dsuda/io.hpp"

using namespace dsuda;
namespace fs = std::filesystem;

TEST(Reals, ShortestFormatRoundTrips) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    EXPECT_EQ(parse_real(format_real(v), "test"), v);
    EXPECT_EQ(parse_real(format_real17(v), "test"), v);
  }
  EXPECT_EQ(format_real(0.5), "0.5");
  EXPECT_EQ(format_real17(0.1), "0.10000000000000001");
}

TEST(Reals, ParseRejectsGarbage) {
  EXPECT_THROW(parse_real("", "x"), FormatError);
  EXPECT_THROW(parse_real("1.5abc", "x"), FormatError);
  EXPECT_THROW(parse_integer("3.2", "x"), FormatError);
  EXPECT_EQ(parse_real("+2.5", "x"), 2.5);
}

TEST(Csv, RawRoundTrip) {
  std::vector<RawTrial> trials = {
      {"S001", Domain::source, Side::right, 1, 10.0, {0.125, -3.5, 1e-9}, ""},
      {"T002", Domain::target, Side::left, std::nullopt, 8.0, {1.0, 2.0, 3.0}, ""},
  };
  const std::string text = format_raw_csv(trials);
  EXPECT_EQ(text.substr(0, text.find('\n')), "subject_id,domain,side,label,duration_ms,s0,s1,s2");
  const DatasetTable table = parse_dataset_csv(text, "raw.csv");
  EXPECT_FALSE(table.has_segment_index);
  const auto back = to_raw_trials(table, "raw.csv");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].subject_id, trials[i].subject_id);
    EXPECT_EQ(back[i].domain, trials[i].domain);
    EXPECT_EQ(back[i].side, trials[i].side);
    EXPECT_EQ(back[i].label, trials[i].label);
    EXPECT_EQ(back[i].duration_ms, trials[i].duration_ms);
    EXPECT_EQ(back[i].samples, trials[i].samples);
  }
}

TEST(Csv, ProcessedRoundTripKeepsSegmentIndex) {
  ProcessedTrial t;
  t.subject_id = "S7";
  t.domain = Domain::source;
  t.side = Side::right;
  t.label = 0;
  t.duration_ms = 8.0;
  t.samples = {0.0, 0.25, 1.0};
  t.segment_index = 4;
  const std::string text = format_processed_csv({t});
  EXPECT_EQ(text.substr(0, text.find('\n')), "subject_id,domain,side,label,duration_ms,segment_index,s0,s1,s2");
  const auto table = parse_dataset_csv(text, "p.csv");
  ASSERT_TRUE(table.has_segment_index);
  ASSERT_EQ(table.rows.size(), 1u);
  EXPECT_EQ(table.rows[0].segment_index, 4u);
  EXPECT_EQ(table.rows[0].samples, t.samples);
}

TEST(Csv, ErrorsNameTheRow) {
  const std::string bad =
      "subject_id,domain,side,label,duration_ms,s0,s1\n"
      "A,source,0,1,10,0.5,0.25\n"
      "B,source,2,1,10,0.5,0.25\n";
  try {
    parse_dataset_csv(bad, "bad.csv");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv row 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_dataset_csv("a,b,c\n", "h.csv"), FormatError);
  EXPECT_THROW(parse_dataset_csv("subject_id,domain,side,label,duration_ms,s0,s1\nA,mars,0,1,10,1,2\n", "d.csv"),
               FormatError);
  EXPECT_THROW(parse_dataset_csv("subject_id,domain,side,label,duration_ms,s0,s1\nA,source,0,1,10,1,x\n", "d.csv"),
               FormatError);
  EXPECT_THROW(parse_dataset_csv("subject_id,domain,side,label,duration_ms,s0,s1\nA,source,0,3,10,1,2\n", "d.csv"),
               FormatError);
  EXPECT_THROW(parse_dataset_csv("", "e.csv"), FormatError);
}

TEST(Csv, AcceptsCrlfAndBlankLines) {
  const auto t = parse_dataset_csv("subject_id,domain,side,label,duration_ms,s0,s1\r\n\r\nA,target,1,,8,1,2\r\n", "w.csv");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_FALSE(t.rows[0].label.has_value());
  EXPECT_EQ(t.rows[0].side, Side::right);
}

TEST(Files, AtomicWriteReplacesAndLeavesNoTemp) {
  const fs::path dir = fs::temp_directory_path() / "dsuda_io_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_file_atomic(dir / "a.txt", "first");
  write_file_atomic(dir / "a.txt", "second");
  EXPECT_EQ(read_file(dir / "a.txt"), "second");
  EXPECT_FALSE(fs::exists(dir / "a.txt.tmp"));
  EXPECT_THROW(write_file_atomic(dir / "missing" / "b.txt", "x"), std::runtime_error);
  EXPECT_FALSE(fs::exists(dir / "missing"));
  fs::remove_all(dir);
}

TEST(Text, SplitAndTrim) {
  const auto parts = split("a,,b", ',');
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[1], "");
  EXPECT_EQ(trim("  x y \t\n"), "x y");
  EXPECT_EQ(trim("   "), "");
}
