#include "crowdhg/optim.hpp"

#include <algorithm>
#include <cmath>

#include "crowdhg/error.hpp"

namespace crowdhg {

void Adam::step(ParamStore& params, const ParamStore& grads) {
  if (!params.same_layout(grads) || !params.same_layout(m_)) {
    throw ValidationError("adam: parameter/gradient layout mismatch");
  }
  if (!grads.all_finite()) throw NumericalError("adam: non-finite gradient");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto gi = grads.begin();
  auto mi = m_.begin();
  auto vi = v_.begin();
  for (auto& [name, p] : params) {
    const Tensor& g = gi->second;
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    ++gi;
    ++mi;
    ++vi;
  }
}

nlohmann::json Adam::to_json() const {
  return {{"lr", cfg_.lr},          {"beta1", cfg_.beta1}, {"beta2", cfg_.beta2},
          {"eps", cfg_.eps},        {"step", t_},          {"m", params_to_json(m_)},
          {"v", params_to_json(v_)}};
}

Adam Adam::from_json(const nlohmann::json& j) {
  Adam a;
  try {
    a.cfg_ = {j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
              j.at("eps").get<double>()};
    a.t_ = j.at("step").get<std::uint64_t>();
    a.m_ = params_from_json(j.at("m"));
    a.v_ = params_from_json(j.at("v"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("optimizer state: ") + e.what());
  }
  return a;
}

GradCheckReport grad_check(const Objective& f, const ParamStore& params, double eps,
                           std::size_t max_per_param) {
  if (!(eps > 0)) throw ValidationError("grad_check: eps must be positive");
  ParamStore analytic = params.zeros_like();
  const double base = f(params, &analytic);
  if (!std::isfinite(base) || !analytic.all_finite()) {
    throw NumericalError("grad_check: non-finite objective or gradient");
  }
  GradCheckReport report;
  ParamStore probe = params;
  for (auto& [name, tensor] : probe) {
    const std::size_t n = tensor.size();
    const std::size_t stride = (max_per_param == 0 || n <= max_per_param) ? 1 : (n + max_per_param - 1) / max_per_param;
    for (std::size_t k = 0; k < n; k += stride) {
      const double orig = tensor[k];
      tensor[k] = orig + eps;
      const double fp = f(probe, nullptr);
      tensor[k] = orig - eps;
      const double fm = f(probe, nullptr);
      tensor[k] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericalError("grad_check: non-finite objective while probing " + name);
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic.at(name)[k];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++report.checked;
      if (report.checked == 1 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = {name, k, a, numeric, err};
      }
    }
  }
  return report;
}

}  // namespace crowdhg
