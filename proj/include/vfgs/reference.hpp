#pragma once

#include <array>
#include <optional>
#include <string>

namespace vfgs {

// Published VFGS-Net test scores (percent for Dice/SE/SP, pixels for
// HD95/ASSD). Printed next to local results for orientation only; a CPU run
// on a handful of images is not expected to approach them.
struct ReferenceRow {
  const char* dataset;
  double dice, se, sp, hd95, assd;
};

inline constexpr std::array<ReferenceRow, 4> kPublishedScores{{
    {"DRIVE", 83.23, 82.37, 97.87, 2.41, 0.55},
    {"HRF", 85.60, 84.35, 97.26, 2.21, 0.43},
    {"CHASE_DB1", 81.43, 80.69, 97.14, 3.60, 0.73},
    {"STARE", 83.21, 82.42, 98.39, 3.44, 0.76},
}};

inline std::optional<ReferenceRow> published_scores(const std::string& dataset) {
  for (const auto& r : kPublishedScores)
    if (dataset == r.dataset) return r;
  return std::nullopt;
}

}  // namespace vfgs
