#include "crowdhg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "crowdhg/error.hpp"

namespace crowdhg::metrics {

double mpjpe(std::span<const std::vector<double>> pred, std::span<const std::vector<double>> gt, Alignment align,
             std::size_t root) {
  if (pred.size() != gt.size()) throw ValidationError("mpjpe: person count mismatch");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < pred.size(); ++n) {
    const auto& p = pred[n];
    const auto& g = gt[n];
    if (p.size() != g.size() || p.size() % 3 != 0) throw ValidationError("mpjpe: joint count mismatch");
    const std::size_t J = p.size() / 3;
    if (align == Alignment::root && root >= J) throw ValidationError("mpjpe: root index out of range");
    for (std::size_t j = 0; j < J; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        double d = p[3 * j + k] - g[3 * j + k];
        if (align == Alignment::root) d -= p[3 * root + k] - g[3 * root + k];
        sq += d * d;
      }
      total += std::sqrt(sq);
      ++count;
    }
  }
  if (count == 0) return 0.0;
  return 1000.0 * total / static_cast<double>(count);
}

double pcod(std::span<const body::Vec3> pred_roots, std::span<const body::Vec3> gt_roots) {
  if (pred_roots.size() != gt_roots.size()) throw ValidationError("pcod: person count mismatch");
  const std::size_t n = gt_roots.size();
  if (n < 2) throw ValidationError("pcod: needs at least 2 persons");
  std::size_t correct = 0, counted = 0;
  auto sign = [](double d) { return std::abs(d) < kOrdinalTieBand ? 0 : (d > 0 ? 1 : -1); };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int g = sign(gt_roots[i][2] - gt_roots[j][2]);
      const int p = sign(pred_roots[i][2] - pred_roots[j][2]);
      if (g == 0) {
        if (p == 0) {
          ++correct;
          ++counted;
        }
        continue;
      }
      ++counted;
      if (g == p) ++correct;
    }
  }
  if (counted == 0) return 100.0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(counted);
}

F1Score match_and_f1(std::span<const body::Vec3> pred_roots, std::span<const body::Vec3> gt_roots, double threshold) {
  if (!(threshold > 0)) throw ValidationError("match_and_f1: threshold must be positive");
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t g = 0; g < gt_roots.size(); ++g) {
    for (std::size_t p = 0; p < pred_roots.size(); ++p) {
      const double d = std::hypot(gt_roots[g][0] - pred_roots[p][0], gt_roots[g][1] - pred_roots[p][1],
                                  gt_roots[g][2] - pred_roots[p][2]);
      if (d <= threshold) pairs.emplace_back(d, g, p);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  F1Score out;
  std::vector<char> gt_used(gt_roots.size(), 0), pred_used(pred_roots.size(), 0);
  for (const auto& [d, g, p] : pairs) {
    if (gt_used[g] || pred_used[p]) continue;
    gt_used[g] = pred_used[p] = 1;
    out.matching.matches.push_back({g, p, d});
  }
  for (std::size_t g = 0; g < gt_roots.size(); ++g)
    if (!gt_used[g]) out.matching.unmatched_gt.push_back(g);
  for (std::size_t p = 0; p < pred_roots.size(); ++p)
    if (!pred_used[p]) out.matching.unmatched_pred.push_back(p);
  const double m = static_cast<double>(out.matching.matches.size());
  out.precision = pred_roots.empty() ? 0.0 : m / static_cast<double>(pred_roots.size());
  out.recall = gt_roots.empty() ? 0.0 : m / static_cast<double>(gt_roots.size());
  out.f1 = (out.precision + out.recall) > 0 ? 2.0 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
  return out;
}

}  // namespace crowdhg::metrics
