#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mseva/annotation/annotation.hpp"
#include "mseva/common/error.hpp"

using namespace mseva;
using namespace mseva::annotation;

namespace {

constexpr Label P = Label::Positive;
constexpr Label N = Label::Negative;
constexpr Label U = Label::Uncertain;

struct ProtocolFixture {
  std::vector<AnnotationRecord> records;
  std::vector<VideoMetadata> metadata;
};

// 165 rated videos: 147 with a positive or negative majority (85 positive,
// 62 negative) carrying 236/185/20 raw votes, plus 18 that must be dropped.
ProtocolFixture protocol_fixture() {
  struct Block {
    int count;
    std::array<Label, 3> votes;
  };
  const std::vector<Block> blocks = {
      {66, {P, P, P}}, {19, {P, U, P}}, {61, {N, N, N}}, {1, {U, N, N}},  // valid
      {6, {P, N, U}},  {6, {U, P, U}},  {6, {N, U, U}},                    // dropped
  };
  ProtocolFixture f;
  int video = 0;
  for (const auto& b : blocks) {
    for (int i = 0; i < b.count; ++i, ++video) {
      char id[16];
      std::snprintf(id, sizeof id, "v%03d", video);
      for (int r = 0; r < 3; ++r) {
        f.records.push_back({id, "judge" + std::to_string((video + r * 5) % 12), b.votes[static_cast<std::size_t>(r)]});
      }
    }
  }
  // Metadata for the valid videos (v000..v146): 40/58/37/7/5 duration bins,
  // 115 Chinese and 32 English.
  const std::vector<std::pair<int, double>> bins = {{40, 45.0}, {58, 75.0}, {37, 100.0}, {7, 130.0}, {5, 170.0}};
  int v = 0;
  for (const auto& [count, seconds] : bins) {
    for (int i = 0; i < count; ++i, ++v) {
      char id[16];
      std::snprintf(id, sizeof id, "v%03d", v);
      f.metadata.push_back({id, seconds, v < 115 ? "zh" : "en", v % 2 ? "news-a" : "news-b"});
    }
  }
  // Dropped videos also have metadata; it must not be counted.
  f.metadata.push_back({"v150", 10.0, "fr", "x"});
  return f;
}

// Fleiss by enumerating every ordered pair of distinct raters per item.
double fleiss_brute_force(const std::vector<std::vector<int>>& rows) {
  const std::size_t k = rows[0].size();
  const int n = std::accumulate(rows[0].begin(), rows[0].end(), 0);
  double agree_sum = 0.0;
  std::vector<double> totals(k, 0.0);
  for (const auto& row : rows) {
    std::vector<std::size_t> raters;
    for (std::size_t c = 0; c < k; ++c) {
      for (int i = 0; i < row[c]; ++i) raters.push_back(c);
      totals[c] += row[c];
    }
    int agree = 0;
    for (std::size_t i = 0; i < raters.size(); ++i) {
      for (std::size_t j = 0; j < raters.size(); ++j) agree += (i != j && raters[i] == raters[j]) ? 1 : 0;
    }
    agree_sum += static_cast<double>(agree) / (n * (n - 1));
  }
  const double p_bar = agree_sum / static_cast<double>(rows.size());
  double p_e = 0.0;
  for (double t : totals) {
    const double p = t / (static_cast<double>(rows.size()) * n);
    p_e += p * p;
  }
  return (p_bar - p_e) / (1.0 - p_e);
}

// Cohen from an explicit confusion table.
double cohen_brute_force(const std::vector<int>& a, const std::vector<int>& b, int k) {
  std::vector<std::vector<double>> table(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) table[static_cast<std::size_t>(a[i])][static_cast<std::size_t>(b[i])] += 1;
  const double n = static_cast<double>(a.size());
  double po = 0.0;
  double pe = 0.0;
  for (int i = 0; i < k; ++i) {
    po += table[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] / n;
    double row = 0.0;
    double col = 0.0;
    for (int j = 0; j < k; ++j) {
      row += table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      col += table[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    }
    pe += (row / n) * (col / n);
  }
  return (po - pe) / (1.0 - pe);
}

std::vector<AnnotationRecord> votes(const std::string& video, std::array<Label, 3> labels) {
  return {{video, "a", labels[0]}, {video, "b", labels[1]}, {video, "c", labels[2]}};
}

}  // namespace

TEST(ResolveLabels, MajorityExamples) {
  std::vector<AnnotationRecord> records;
  for (const auto& r : votes("v1", {P, P, N})) records.push_back(r);
  for (const auto& r : votes("v2", {P, N, U})) records.push_back(r);
  for (const auto& r : votes("v3", {U, U, P})) records.push_back(r);
  for (const auto& r : votes("v4", {N, N, N})) records.push_back(r);
  const auto labels = resolve_labels(records);
  ASSERT_EQ(labels.size(), 4u);
  EXPECT_EQ(labels[0].label, P);
  EXPECT_EQ(labels[0].status, LabelStatus::Valid);
  EXPECT_FALSE(labels[1].label.has_value());
  EXPECT_EQ(labels[1].status, LabelStatus::Dropped);
  EXPECT_EQ(labels[2].label, U);  // majority exists but is uncertain
  EXPECT_EQ(labels[2].status, LabelStatus::Dropped);
  EXPECT_EQ(labels[3].label, N);
  EXPECT_EQ(labels[3].status, LabelStatus::Valid);
}

TEST(ResolveLabels, IncompleteRatings) {
  std::vector<AnnotationRecord> records = votes("v1", {P, P, N});
  records.pop_back();
  try {
    resolve_labels(records);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IncompleteRatings);
    EXPECT_NE(e.detail().find("v1"), std::string::npos);
  }
}

TEST(ResolveLabels, ProtocolFixture) {
  const auto f = protocol_fixture();
  const auto labels = resolve_labels(f.records);
  ASSERT_EQ(labels.size(), 165u);
  int valid = 0;
  int positive = 0;
  int negative = 0;
  for (const auto& l : labels) {
    if (l.status != LabelStatus::Valid) continue;
    ++valid;
    positive += *l.label == P;
    negative += *l.label == N;
  }
  EXPECT_EQ(valid, 147);
  EXPECT_EQ(positive, 85);
  EXPECT_EQ(negative, 62);
}

TEST(ResolveLabels, RaterOrderDoesNotMatter) {
  auto f = protocol_fixture();
  const auto base = resolve_labels(f.records);
  std::mt19937 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(f.records.begin(), f.records.end(), rng);
    const auto again = resolve_labels(f.records);
    ASSERT_EQ(again.size(), base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      EXPECT_EQ(again[i].video_id, base[i].video_id);
      EXPECT_EQ(again[i].label, base[i].label);
      EXPECT_EQ(again[i].status, base[i].status);
    }
  }
}

TEST(DatasetStats, ProtocolFixture) {
  const auto f = protocol_fixture();
  const auto labels = resolve_labels(f.records);
  const auto stats = dataset_stats(labels, f.metadata, f.records);
  EXPECT_EQ(stats.label_counts.at("positive"), 236);
  EXPECT_EQ(stats.label_counts.at("negative"), 185);
  EXPECT_EQ(stats.label_counts.at("uncertain"), 20);
  EXPECT_EQ(stats.status_counts.at("valid"), 147);
  EXPECT_EQ(stats.status_counts.at("dropped"), 18);
  EXPECT_EQ(stats.duration_bins, (std::array<std::int64_t, 5>{40, 58, 37, 7, 5}));
  EXPECT_EQ(stats.language_counts.at("zh"), 115);
  EXPECT_EQ(stats.language_counts.at("en"), 32);
  EXPECT_FALSE(stats.language_counts.contains("fr"));

  const auto resolved_only = dataset_stats(labels, f.metadata);
  EXPECT_EQ(resolved_only.label_counts.at("positive"), 85);
  EXPECT_EQ(resolved_only.label_counts.at("negative"), 62);
}

TEST(DatasetStats, EmptyInput) {
  const auto stats = dataset_stats({}, {});
  for (const auto& [label, count] : stats.label_counts) EXPECT_EQ(count, 0) << label;
  for (auto bin : stats.duration_bins) EXPECT_EQ(bin, 0);
  EXPECT_TRUE(stats.language_counts.empty());
  EXPECT_EQ(stats.to_json()["status_counts"]["valid"], 0);
}

TEST(DatasetStats, DurationBinEdges) {
  EXPECT_EQ(duration_bin(0.0), 0);
  EXPECT_EQ(duration_bin(59.99), 0);
  EXPECT_EQ(duration_bin(60.0), 1);
  EXPECT_EQ(duration_bin(90.0), 2);
  EXPECT_EQ(duration_bin(120.0), 3);
  EXPECT_EQ(duration_bin(149.9), 3);
  EXPECT_EQ(duration_bin(150.0), 4);
}

TEST(RatingMatrix, FromRecordsPreservesVotes) {
  const auto f = protocol_fixture();
  const RatingMatrix m = rating_matrix(f.records);
  ASSERT_EQ(m.items(), 165u);
  EXPECT_EQ(m.raters(), 3);
  int total = 0;
  for (std::size_t i = 0; i < m.items(); ++i) {
    for (std::size_t c = 0; c < m.categories(); ++c) total += m.at(i, c);
  }
  EXPECT_EQ(total, 165 * 3);

  std::vector<std::string> only = {"v000", "v150"};
  EXPECT_EQ(rating_matrix(f.records, &only).items(), 2u);
}

TEST(RatingMatrix, RejectsRaggedRows) {
  EXPECT_THROW(RatingMatrix::from_rows({{2, 1}, {1, 1}}), Error);
  EXPECT_THROW(RatingMatrix::from_rows({{2, 1}, {3}}), Error);
  EXPECT_THROW(RatingMatrix::from_rows({{4, -1}}), Error);
}

TEST(Fleiss, UnanimousMixedCategories) {
  EXPECT_DOUBLE_EQ(fleiss_kappa(RatingMatrix::from_rows({{3, 0, 0}, {0, 3, 0}, {0, 0, 3}, {3, 0, 0}})), 1.0);
}

TEST(Fleiss, TwoByTwoMatchesBruteForce) {
  const std::vector<std::vector<int>> rows = {{2, 1}, {1, 2}};
  // P_i = 1/3 for both rows, p = (1/2, 1/2): kappa = (1/3 - 1/2) / (1/2) = -1/3.
  EXPECT_NEAR(fleiss_kappa(RatingMatrix::from_rows(rows)), fleiss_brute_force(rows), 1e-12);
  EXPECT_NEAR(fleiss_kappa(RatingMatrix::from_rows(rows)), -1.0 / 3.0, 1e-12);
}

TEST(Fleiss, RandomMatricesMatchBruteForce) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int items = std::uniform_int_distribution<int>(2, 40)(rng);
    const int k = std::uniform_int_distribution<int>(2, 5)(rng);
    const int n = std::uniform_int_distribution<int>(2, 7)(rng);
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(items), std::vector<int>(static_cast<std::size_t>(k), 0));
    for (auto& row : rows) {
      for (int r = 0; r < n; ++r) ++row[std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(k) - 1)(rng)];
    }
    const double expected = fleiss_brute_force(rows);
    if (!std::isfinite(expected)) continue;
    EXPECT_NEAR(fleiss_kappa(RatingMatrix::from_rows(rows)), expected, 1e-12) << "trial " << trial;
  }
}

TEST(Fleiss, DegenerateExpectation) {
  EXPECT_DOUBLE_EQ(fleiss_kappa(RatingMatrix::from_rows({{3, 0}, {3, 0}})), 1.0);
}

TEST(Fleiss, CategoryPermutationInvariant) {
  std::mt19937 rng(4);
  std::vector<std::vector<int>> rows(30, std::vector<int>(3, 0));
  for (auto& row : rows) {
    for (int r = 0; r < 3; ++r) ++row[std::uniform_int_distribution<std::size_t>(0, 2)(rng)];
  }
  const double base = fleiss_kappa(RatingMatrix::from_rows(rows));
  std::vector<std::size_t> perm = {0, 1, 2};
  while (std::next_permutation(perm.begin(), perm.end())) {
    auto permuted = rows;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < 3; ++c) permuted[i][perm[c]] = rows[i][c];
    }
    EXPECT_NEAR(fleiss_kappa(RatingMatrix::from_rows(permuted)), base, 1e-12);
  }
}

TEST(Fleiss, ProtocolFixtureExceedsThreshold) {
  const auto f = protocol_fixture();
  EXPECT_GT(fleiss_kappa(rating_matrix(f.records)), 0.65);
}

TEST(Cohen, IdenticalSequences) {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> a(50);
    for (auto& x : a) x = std::uniform_int_distribution<int>(0, 2)(rng);
    EXPECT_EQ(cohen_kappa(a, a), 1.0);
  }
  const std::vector<int> constant(10, 1);
  EXPECT_EQ(cohen_kappa(constant, constant), 1.0);
}

TEST(Cohen, IndependentRatersNearZero) {
  std::mt19937 rng(77);
  std::vector<int> a(10000);
  std::vector<int> b(10000);
  for (auto& x : a) x = std::uniform_int_distribution<int>(0, 1)(rng);
  for (auto& x : b) x = std::uniform_int_distribution<int>(0, 1)(rng);
  EXPECT_NEAR(cohen_kappa(a, b), 0.0, 0.05);
}

TEST(Cohen, ReannotationAgreement) {
  // 100 videos, 50 per class, 4 re-annotations disagree (96% agreement).
  std::vector<int> original(100);
  for (int i = 0; i < 100; ++i) original[static_cast<std::size_t>(i)] = i < 50 ? 0 : 1;
  auto again = original;
  for (int i : {3, 17, 60, 88}) again[static_cast<std::size_t>(i)] ^= 1;
  const double k = cohen_kappa(original, again);
  EXPECT_GT(k, 0.85);
  EXPECT_NEAR(k, 0.92, 1e-12);
}

TEST(Cohen, RandomMatchesBruteForceAndPermutation) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> a(60);
    std::vector<int> b(60);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = std::uniform_int_distribution<int>(0, 2)(rng);
      b[i] = std::bernoulli_distribution(0.7)(rng) ? a[i] : std::uniform_int_distribution<int>(0, 2)(rng);
    }
    const double k = cohen_kappa(a, b);
    EXPECT_NEAR(k, cohen_brute_force(a, b, 3), 1e-12);
    const std::vector<int> perm = {2, 0, 1};
    std::vector<int> pa(a.size());
    std::vector<int> pb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      pa[i] = perm[static_cast<std::size_t>(a[i])];
      pb[i] = perm[static_cast<std::size_t>(b[i])];
    }
    EXPECT_NEAR(cohen_kappa(pa, pb), k, 1e-12);
  }
}

TEST(Cohen, InvalidInput) {
  const std::vector<int> a = {0, 1};
  const std::vector<int> b = {0};
  EXPECT_THROW(cohen_kappa(a, b), Error);
  EXPECT_THROW(cohen_kappa(std::vector<int>{}, std::vector<int>{}), Error);
}

TEST(RatingsCsv, ParsesAndRejects) {
  const auto records = parse_ratings_csv("video_id,rater_id,label\nv1,r1,positive\nv1,r2,negative\nv1,r3,uncertain\n");
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[1].label, N);
  EXPECT_EQ(records[2].rater_id, "r3");
  EXPECT_THROW(parse_ratings_csv("video_id,rater_id,label\nv1,r1,happy\n"), Error);
  EXPECT_THROW(parse_ratings_csv("video_id,rater_id,label\nv1,r1\n"), Error);
}

TEST(Labels, ParseAndPrint) {
  for (Label l : {P, N, U}) EXPECT_EQ(parse_label(to_string(l)), l);
}
