#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdhg/params.hpp"

namespace crowdhg {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected adaptive-moment optimizer. Moment buffers mirror the
/// parameter layout they were created for.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, const ParamStore& params)
      : cfg_(cfg), m_(params.zeros_like()), v_(params.zeros_like()) {}

  /// Applies one update in place. Throws on layout mismatch or non-finite grads.
  void step(ParamStore& params, const ParamStore& grads);

  [[nodiscard]] std::uint64_t steps() const noexcept { return t_; }
  [[nodiscard]] const AdamConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) noexcept { cfg_.lr = lr; }

  [[nodiscard]] nlohmann::json to_json() const;
  static Adam from_json(const nlohmann::json& j);

 private:
  AdamConfig cfg_;
  ParamStore m_;
  ParamStore v_;
  std::uint64_t t_ = 0;
};

/// Objective for finite-difference checking. Must fill `grads` (same layout as
/// the params) when it is non-null, and return the scalar value.
using Objective = std::function<double(const ParamStore& params, ParamStore* grads)>;

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  GradCheckEntry worst;
  std::size_t checked = 0;
};

/// Compares analytic gradients against central differences. The error per
/// entry is |analytic - numeric| / max(1, |analytic|). At most
/// `max_per_param` entries of each tensor are probed (evenly strided).
GradCheckReport grad_check(const Objective& f, const ParamStore& params, double eps = 1e-5,
                           std::size_t max_per_param = 0);

}  // namespace crowdhg
