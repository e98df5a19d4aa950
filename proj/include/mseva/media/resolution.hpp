#pragma once

#include <span>
#include <vector>

#include "mseva/media/types.hpp"

namespace mseva::media {

inline constexpr int kFallbackLongSide = 224;

/// The four compression rules measured on the short-video corpus
/// (width x height ranges, both ends inclusive).
std::vector<ResolutionRule> default_resolution_rules();

bool is_portrait(int width, int height);

/// Rejects empty ranges, non-positive targets, orientation flips and rule
/// pairs whose source boxes overlap. Throws Error{InvalidConfig|AmbiguousRules}.
void validate_rules(std::span<const ResolutionRule> rules);

/// Longest side scaled to 224 with the aspect ratio kept.
ResolutionRule fallback_rule(int width, int height);

/// Returns the single rule containing (width, height), or the fallback rule.
/// Throws Error{AmbiguousRules} when more than one rule matches.
ResolutionRule select_resolution_rule(int width, int height, std::span<const ResolutionRule> rules);

}  // namespace mseva::media
