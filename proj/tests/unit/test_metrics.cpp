#include <cmath>
#include <random>

#include <doctest.h>

#include "crowdhg/error.hpp"
#include "crowdhg/metrics.hpp"
#include "crowdhg/params.hpp"

using namespace crowdhg;
using namespace crowdhg::metrics;

namespace {

std::vector<body::Vec3> roots_at_depths(std::vector<double> z) {
  std::vector<body::Vec3> out;
  for (std::size_t i = 0; i < z.size(); ++i) out.push_back({0.3 * static_cast<double>(i), 1.0, z[i]});
  return out;
}

std::vector<body::Vec3> random_roots(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(-4.0, 4.0), z(5.0, 15.0);
  std::vector<body::Vec3> out(n);
  for (auto& r : out) r = {u(rng), u(rng) * 0.1, z(rng)};
  return out;
}

}  // namespace

TEST_CASE("MPJPE examples") {
  const std::vector<std::vector<double>> gt = {{0, 0, 0, 0.1, 0.5, 0.2}};
  CHECK(mpjpe(gt, gt, Alignment::none) == 0.0);

  auto shifted = gt;
  for (std::size_t j = 0; j < 2; ++j) shifted[0][3 * j] += 0.010;
  CHECK(mpjpe(shifted, gt, Alignment::root) == doctest::Approx(0.0).scale(1.0));
  CHECK(mpjpe(shifted, gt, Alignment::none) == doctest::Approx(10.0).epsilon(1e-12));

  auto hand = gt;
  for (std::size_t j = 0; j < 2; ++j) {
    hand[0][3 * j] += 0.030;
    hand[0][3 * j + 1] += 0.040;
  }
  CHECK(mpjpe(hand, gt, Alignment::none) == doctest::Approx(50.0).epsilon(1e-12));

  // root alignment on a non-zero root index
  auto bent = gt;
  bent[0][0] += 0.2;  // joint 0 moves, joint 1 is the root
  CHECK(mpjpe(bent, gt, Alignment::root, 1) == doctest::Approx(100.0).epsilon(1e-12));

  const std::vector<std::vector<double>> empty;
  CHECK(mpjpe(empty, empty, Alignment::none) == 0.0);
  CHECK_THROWS_AS(mpjpe(gt, empty, Alignment::none), ValidationError);
  const std::vector<std::vector<double>> short_row = {{0, 0, 0}};
  CHECK_THROWS_AS(mpjpe(short_row, gt, Alignment::none), ValidationError);
  CHECK_THROWS_AS(mpjpe(gt, gt, Alignment::root, 5), ValidationError);
}

TEST_CASE("MPJPE: alignment obeys the triangle bound") {
  Rng rng(3);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> pred(4, std::vector<double>(45)), gt(4, std::vector<double>(45));
    for (std::size_t p = 0; p < 4; ++p)
      for (std::size_t i = 0; i < 45; ++i) {
        gt[p][i] = n01(rng);
        pred[p][i] = gt[p][i] + 0.2 * n01(rng);
      }
    double root_err = 0;
    for (std::size_t p = 0; p < 4; ++p)
      root_err += 1000.0 * std::hypot(pred[p][0] - gt[p][0], pred[p][1] - gt[p][1], pred[p][2] - gt[p][2]);
    root_err /= 4.0;
    CHECK(mpjpe(pred, gt, Alignment::root) <= mpjpe(pred, gt, Alignment::none) + root_err + 1e-9);
  }
}

TEST_CASE("PCOD examples") {
  const auto gt = roots_at_depths({5.0, 7.0, 9.0});
  CHECK(pcod(gt, gt) == 100.0);
  CHECK(pcod(roots_at_depths({7.0, 5.0}), roots_at_depths({5.0, 7.0})) == 0.0);
  CHECK(pcod(roots_at_depths({7.0, 5.0, 9.0}), gt) == doctest::Approx(200.0 / 3.0).epsilon(1e-12));

  // a GT tie scores when the prediction also ties, and drops out otherwise
  const auto tie = roots_at_depths({5.0, 5.005, 9.0});
  CHECK(pcod(roots_at_depths({6.0, 6.004, 8.0}), tie) == 100.0);
  CHECK(pcod(roots_at_depths({6.0, 6.5, 8.0}), tie) == 100.0);  // 2 of 2 counted pairs
  CHECK(pcod(roots_at_depths({6.0, 6.5, 5.0}), tie) == 0.0);

  CHECK_THROWS_AS(pcod(roots_at_depths({5.0}), roots_at_depths({5.0})), ValidationError);
  CHECK_THROWS_AS(pcod(gt, roots_at_depths({5.0, 7.0})), ValidationError);
}

TEST_CASE("PCOD is invariant to a common translation") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto gt = random_roots(8, rng), pred = random_roots(8, rng);
    auto gt_t = gt, pred_t = pred;
    for (auto& r : gt_t) r = {r[0] + 1.5, r[1] - 0.3, r[2] + 4.0};
    for (auto& r : pred_t) r = {r[0] + 1.5, r[1] - 0.3, r[2] + 4.0};
    CHECK(pcod(pred_t, gt_t) == pcod(pred, gt));
  }
}

TEST_CASE("F1 examples") {
  const auto gt = roots_at_depths({5.0, 9.0});
  for (double t : kF1Thresholds) {
    const auto f = match_and_f1(gt, gt, t);
    CHECK(f.f1 == 1.0);
    CHECK(f.matching.matches.size() == 2);
  }
  const auto none = match_and_f1({}, gt, 0.4);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(none.matching.unmatched_gt.size() == 2);

  const std::vector<body::Vec3> one = {{gt[0][0] + 0.3, gt[0][1] + 0.4, gt[0][2]}};  // 0.5 m away
  const auto tight = match_and_f1(one, gt, 0.4);
  CHECK(tight.f1 == 0.0);
  CHECK(tight.matching.unmatched_pred.size() == 1);
  const auto loose = match_and_f1(one, gt, 0.8);
  CHECK(loose.precision == 1.0);
  CHECK(loose.recall == 0.5);
  CHECK(loose.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  REQUIRE(loose.matching.matches.size() == 1);
  CHECK(loose.matching.matches[0].gt == 0);
  CHECK(loose.matching.matches[0].distance == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(match_and_f1(one, gt, 0.0), ValidationError);
}

TEST_CASE("F1 matching is greedy by ascending distance") {
  // Pred 0 is closest to GT 0 (0.1), which takes it even though an optimal
  // assignment would pair pred 0 with GT 1 and pred 1 with GT 0.
  const std::vector<body::Vec3> gt = {{0, 0, 5}, {0.5, 0, 5}};
  const std::vector<body::Vec3> pred = {{0.1, 0, 5}, {-0.45, 0, 5}};
  const auto f = match_and_f1(pred, gt, 0.5);
  REQUIRE(f.matching.matches.size() == 1);
  CHECK(f.matching.matches[0].gt == 0);
  CHECK(f.matching.matches[0].pred == 0);
  CHECK(f.f1 == 0.5);
}

TEST_CASE("F1 is monotone in the threshold") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto gt = random_roots(6, rng);
    auto pred = random_roots(5, rng);
    for (std::size_t i = 0; i < 3; ++i) pred[i] = {gt[i][0] + 0.2 * i, gt[i][1], gt[i][2] + 0.3};
    double last = 0.0;
    for (double t = 0.1; t <= 3.0; t += 0.1) {
      const double f1 = match_and_f1(pred, gt, t).f1;
      CHECK(f1 >= last);
      last = f1;
    }
  }
}
