#include <gtest/gtest.h>

#include <sstream>

#include "morphtag/evaluation.hpp"

using namespace morphtag;

namespace {

const Vocabulary kTags({"A", "B", "C"});

}  // namespace

TEST(ErrorRate, TwoOfTenWrongIsTwentyPercent) {
  const std::vector<std::string> gold(10, "A");
  std::vector<int> pred(10, 0);
  pred[3] = 1;
  pred[7] = 2;
  const EvalReport r = error_rate(pred, gold, kTags, Tagset::kPos);
  EXPECT_EQ(r.tokens, 10u);
  EXPECT_EQ(r.errors, 2u);
  EXPECT_DOUBLE_EQ(r.error_rate, 20.0);
}

TEST(ErrorRate, AllCorrectIsZero) {
  const std::vector<std::string> gold = {"A", "B", "C"};
  const std::vector<int> pred = {0, 1, 2};
  EXPECT_EQ(error_rate(pred, gold, kTags, Tagset::kPos).error_rate, 0.0);
}

TEST(ErrorRate, GoldTagOutsideInventoryAlwaysCounts) {
  const std::vector<std::string> gold = {"A", "Z"};
  const std::vector<int> pred = {0, 0};
  EXPECT_EQ(error_rate(pred, gold, kTags, Tagset::kPos).errors, 1u);
  const int gold_ids[] = {-1, -1};
  const int pred_ids[] = {0, 1};
  EXPECT_EQ(count_errors(pred_ids, gold_ids), 2u);
}

TEST(ErrorRate, InvariantUnderTokenPermutation) {
  const std::vector<std::string> gold = {"A", "B", "C", "A", "B"};
  const std::vector<int> pred = {0, 2, 2, 1, 1};
  const std::vector<std::string> gold_p = {"B", "A", "C", "B", "A"};
  const std::vector<int> pred_p = {1, 1, 2, 2, 0};
  EXPECT_EQ(error_rate(pred, gold, kTags, Tagset::kPos).errors, error_rate(pred_p, gold_p, kTags, Tagset::kPos).errors);
}

TEST(ErrorRate, SentenceLevelOverload) {
  Sentence a, b;
  a.tags = {"A", "B"};
  b.tags = {"C"};
  a.words = {"x", "y"};
  b.words = {"z"};
  const EvalReport r = error_rate({{0, 0}, {2}}, {a, b}, kTags, Tagset::kMorph);
  EXPECT_EQ(r.errors, 1u);
  EXPECT_EQ(r.tokens, 3u);
  EXPECT_THROW(error_rate({{0, 0}}, {a, b}, kTags, Tagset::kMorph), DataError);
  EXPECT_THROW(error_rate({{0}, {2}}, {a, b}, kTags, Tagset::kMorph), DataError);
}

TEST(ErrorRate, LengthMismatchThrows) {
  const std::vector<std::string> gold = {"A"};
  const std::vector<int> pred = {0, 1};
  EXPECT_THROW(error_rate(pred, gold, kTags, Tagset::kPos), DataError);
}

TEST(FormatPercent, TwoDecimalsHalfUp) {
  EXPECT_EQ(format_percent(8.715), "8.72");
  EXPECT_EQ(format_percent(20.0), "20.00");
  EXPECT_EQ(format_percent(0.0), "0.00");
  EXPECT_EQ(format_percent(99.995), "100.00");
  EXPECT_EQ(format_percent(1.0 / 3.0), "0.33");
  EXPECT_EQ(format_percent(2.0 / 3.0), "0.67");
}

TEST(Report, SingleSetupRow) {
  EvalReport r;
  r.setup = "cnn";
  r.tagset = Tagset::kPosMorph;
  r.tokens = 10;
  r.errors = 2;
  r.error_rate = 20.0;
  const std::string text = report_text({r});
  std::istringstream lines(text);
  std::string header, row, extra;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_FALSE(std::getline(lines, extra));
  EXPECT_EQ(header.rfind("setup", 0), 0u);
  EXPECT_NE(header.find("POSMORPH"), std::string::npos);
  EXPECT_EQ(row.rfind("cnn", 0), 0u);
  EXPECT_NE(row.find("20.00"), std::string::npos);
  EXPECT_EQ(report_csv({r}), "tagset,tokens,errors,error_rate\nPOSMORPH,10,2,20.00\n");
}

TEST(Report, CsvAndTextAgree) {
  std::vector<EvalReport> reports;
  const Tagset order[] = {Tagset::kPosMorph, Tagset::kPos, Tagset::kMorph};
  for (int i = 0; i < 3; ++i) {
    EvalReport r;
    r.setup = "lstm";
    r.tagset = order[i];
    r.tokens = 1000;
    r.errors = static_cast<std::size_t>(10 * (i + 1));
    r.error_rate = 100.0 * double(r.errors) / 1000.0;
    reports.push_back(r);
  }
  EXPECT_EQ(report_csv(reports),
            "tagset,tokens,errors,error_rate\nPOS,1000,20,2.00\nMORPH,1000,30,3.00\nPOSMORPH,1000,10,1.00\n");
  const std::string text = report_text(reports);
  const std::size_t pos = text.find("2.00"), morph = text.find("3.00"), pm = text.find("1.00");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(pos, morph);
  EXPECT_LT(morph, pm);
}
