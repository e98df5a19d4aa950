#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mseva/common/error.hpp"
#include "mseva/media/resolution.hpp"

using namespace mseva;
using namespace mseva::media;

namespace {

// Rows of the compression table, written out independently of
// default_resolution_rules().
struct Row {
  int w0, w1, h0, h1, dw, dh;
};
constexpr Row kTable[] = {
    {470, 490, 550, 570, 180, 224},
    {845, 865, 470, 490, 214, 120},
    {470, 490, 840, 860, 120, 214},
    {1070, 1090, 1910, 1930, 144, 216},
};

}  // namespace

TEST(Resolution, DefaultRulesMatchTable) {
  const auto rules = default_resolution_rules();
  ASSERT_EQ(rules.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rules[i].src_width, (IntRange{kTable[i].w0, kTable[i].w1}));
    EXPECT_EQ(rules[i].src_height, (IntRange{kTable[i].h0, kTable[i].h1}));
    EXPECT_EQ(rules[i].dst_width, kTable[i].dw);
    EXPECT_EQ(rules[i].dst_height, kTable[i].dh);
  }
  EXPECT_NO_THROW(validate_rules(rules));
}

TEST(Resolution, AllCornersMapExactly) {
  const auto rules = default_resolution_rules();
  for (const Row& r : kTable) {
    for (int w : {r.w0, r.w1}) {
      for (int h : {r.h0, r.h1}) {
        const auto sel = select_resolution_rule(w, h, rules);
        EXPECT_FALSE(sel.fallback) << w << "x" << h;
        EXPECT_EQ(sel.dst_width, r.dw) << w << "x" << h;
        EXPECT_EQ(sel.dst_height, r.dh) << w << "x" << h;
      }
    }
  }
}

TEST(Resolution, EveryPointInsideARangeMapsToItsRow) {
  const auto rules = default_resolution_rules();
  for (const Row& r : kTable) {
    for (int w = r.w0; w <= r.w1; ++w) {
      for (int h = r.h0; h <= r.h1; ++h) {
        const auto sel = select_resolution_rule(w, h, rules);
        ASSERT_EQ(sel.dst_width, r.dw);
        ASSERT_EQ(sel.dst_height, r.dh);
        ASSERT_EQ(is_portrait(w, h), is_portrait(sel.dst_width, sel.dst_height));
      }
    }
  }
}

TEST(Resolution, Examples) {
  const auto rules = default_resolution_rules();
  auto dst = [&](int w, int h) {
    const auto r = select_resolution_rule(w, h, rules);
    return std::pair{r.dst_width, r.dst_height};
  };
  EXPECT_EQ(dst(480, 560), std::pair(180, 224));
  EXPECT_EQ(dst(855, 480), std::pair(214, 120));
  EXPECT_EQ(dst(1080, 1920), std::pair(144, 216));
  const auto square = select_resolution_rule(640, 640, rules);
  EXPECT_TRUE(square.fallback);
  EXPECT_EQ(square.dst_width, 224);
  EXPECT_EQ(square.dst_height, 224);
}

TEST(Resolution, FallbackKeepsAspectAndLongSide) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> side(16, 4000);
  for (int i = 0; i < 2000; ++i) {
    const int w = side(rng);
    const int h = side(rng);
    const auto r = fallback_rule(w, h);
    EXPECT_TRUE(r.fallback);
    EXPECT_EQ(std::max(r.dst_width, r.dst_height), kFallbackLongSide);
    EXPECT_GE(std::min(r.dst_width, r.dst_height), 1);
    const double expected_short = 224.0 * std::min(w, h) / std::max(w, h);
    EXPECT_LE(std::abs(std::min(r.dst_width, r.dst_height) - expected_short), 1.0) << w << "x" << h;
    // Rounding may make a near-square target square, but never flips it.
    if (w < h) {
      EXPECT_LE(r.dst_width, r.dst_height);
    } else {
      EXPECT_GE(r.dst_width, r.dst_height);
    }
  }
}

TEST(Resolution, ValidationErrors) {
  auto code_of = [](std::vector<ResolutionRule> rules) {
    try {
      validate_rules(rules);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvariantViolation;  // sentinel: no error
  };
  EXPECT_EQ(code_of({{{490, 470}, {550, 570}, 180, 224}}), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of({{{470, 490}, {550, 570}, 0, 224}}), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of({{{470, 490}, {550, 570}, 224, 180}}), ErrorCode::InvalidConfig);  // portrait -> landscape
  EXPECT_EQ(code_of({{{470, 490}, {550, 570}, 180, 224}, {{480, 500}, {560, 580}, 180, 224}}),
            ErrorCode::AmbiguousRules);
}

TEST(Resolution, OverlappingRulesAreAmbiguousAtSelection) {
  const std::vector<ResolutionRule> rules = {{{470, 490}, {550, 570}, 180, 224}, {{480, 500}, {560, 580}, 180, 224}};
  try {
    select_resolution_rule(485, 565, rules);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AmbiguousRules);
  }
}
