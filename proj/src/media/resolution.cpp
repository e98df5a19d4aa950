#include "mseva/media/resolution.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mseva/common/error.hpp"

namespace mseva::media {
namespace {

std::string describe(const ResolutionRule& r) {
  return "(" + std::to_string(r.src_width.min) + "~" + std::to_string(r.src_width.max) + ")*(" +
         std::to_string(r.src_height.min) + "~" + std::to_string(r.src_height.max) + ") -> " +
         std::to_string(r.dst_width) + "*" + std::to_string(r.dst_height);
}

bool overlaps(const IntRange& a, const IntRange& b) { return a.min <= b.max && b.min <= a.max; }

}  // namespace

std::vector<ResolutionRule> default_resolution_rules() {
  return {
      {{470, 490}, {550, 570}, 180, 224},
      {{845, 865}, {470, 490}, 214, 120},
      {{470, 490}, {840, 860}, 120, 214},
      {{1070, 1090}, {1910, 1930}, 144, 216},
  };
}

bool is_portrait(int width, int height) { return width < height; }

void validate_rules(std::span<const ResolutionRule> rules) {
  for (const auto& r : rules) {
    if (r.src_width.min > r.src_width.max || r.src_height.min > r.src_height.max ||
        r.src_width.min <= 0 || r.src_height.min <= 0) {
      throw Error(ErrorCode::InvalidConfig, "empty source range in rule " + describe(r));
    }
    if (r.dst_width <= 0 || r.dst_height <= 0) {
      throw Error(ErrorCode::InvalidConfig, "non-positive target in rule " + describe(r));
    }
    // Orientation of a range box is judged at its centre.
    const bool src_portrait = (r.src_width.min + r.src_width.max) < (r.src_height.min + r.src_height.max);
    if (src_portrait != is_portrait(r.dst_width, r.dst_height)) {
      throw Error(ErrorCode::InvalidConfig, "rule changes orientation: " + describe(r));
    }
  }
  for (std::size_t i = 0; i < rules.size(); ++i) {
    for (std::size_t j = i + 1; j < rules.size(); ++j) {
      if (overlaps(rules[i].src_width, rules[j].src_width) &&
          overlaps(rules[i].src_height, rules[j].src_height)) {
        throw Error(ErrorCode::AmbiguousRules, describe(rules[i]) + " overlaps " + describe(rules[j]));
      }
    }
  }
}

ResolutionRule fallback_rule(int width, int height) {
  ResolutionRule r;
  r.src_width = {width, width};
  r.src_height = {height, height};
  r.fallback = true;
  const double scale = static_cast<double>(kFallbackLongSide) / std::max(width, height);
  r.dst_width = std::max(1, static_cast<int>(std::lround(width * scale)));
  r.dst_height = std::max(1, static_cast<int>(std::lround(height * scale)));
  return r;
}

ResolutionRule select_resolution_rule(int width, int height, std::span<const ResolutionRule> rules) {
  const ResolutionRule* match = nullptr;
  for (const auto& r : rules) {
    if (!r.src_width.contains(width) || !r.src_height.contains(height)) continue;
    if (match != nullptr) {
      throw Error(ErrorCode::AmbiguousRules, std::to_string(width) + "x" + std::to_string(height) +
                                                 " matches " + describe(*match) + " and " + describe(r));
    }
    match = &r;
  }
  return match ? *match : fallback_rule(width, height);
}

}  // namespace mseva::media
