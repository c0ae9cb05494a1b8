#pragma once

// Finite-difference checks of the full pipeline on a small seeded scene:
// one row per learnable component and per loss term.

#include <string>
#include <vector>

#include "crowdhg/config.hpp"

namespace crowdhg::trainer {

struct GradCheckRow {
  std::string component;
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]"
  std::size_t checked = 0;
  bool pass = false;
};

/// Rows: aggregate, contribution, collective, update, head (each probed
/// under the weighted total loss), then every loss term alone with respect
/// to all parameters, and the total in both reprojection units.
std::vector<GradCheckRow> run_gradcheck_suite(const config::GradCheckConfig& cfg, const body::Skeleton& skel);

}  // namespace crowdhg::trainer
