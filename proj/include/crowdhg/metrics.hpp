#pragma once

#include <span>
#include <vector>

#include "crowdhg/body_model.hpp"

namespace crowdhg::metrics {

enum class Alignment { none, root };

/// Mean per-joint position error in millimeters. Each entry is one person's
/// J x 3 joints in meters; with Alignment::root both sides are shifted so
/// joint `root` sits at the origin.
double mpjpe(std::span<const std::vector<double>> pred, std::span<const std::vector<double>> gt,
             Alignment align, std::size_t root = 0);

/// GT depth differences below this count as ties.
inline constexpr double kOrdinalTieBand = 0.01;

/// Percentage of person pairs whose predicted depth order matches the
/// ground truth. GT ties count as correct when the prediction is also a tie
/// and are dropped from the denominator otherwise. Needs at least 2 persons.
double pcod(std::span<const body::Vec3> pred_roots, std::span<const body::Vec3> gt_roots);

struct Match {
  std::size_t gt = 0;
  std::size_t pred = 0;
  double distance = 0.0;
};

struct MatchResult {
  std::vector<Match> matches;
  std::vector<std::size_t> unmatched_gt;
  std::vector<std::size_t> unmatched_pred;
};

struct F1Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  MatchResult matching;
};

/// Greedy one-to-one matching by ascending root distance; pairs farther than
/// `threshold` meters stay unmatched.
F1Score match_and_f1(std::span<const body::Vec3> pred_roots, std::span<const body::Vec3> gt_roots, double threshold);

/// Standard F1 thresholds in meters.
inline constexpr double kF1Thresholds[] = {0.4, 0.8, 1.2};

}  // namespace crowdhg::metrics
