#include "morphtag/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace morphtag {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-12, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult grad_check(const Objective& f, ParamStore<double>& params,
                           const GradCheckOptions& options) {
  params.zero_grad();
  const double base = f(params, true);
  if (!std::isfinite(base)) throw EvaluationError("grad_check: objective is not finite");

  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) analytic.push_back(params[i].grad);

  Rng rng(options.seed);
  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<double>& p = params[i];
    if (!p.trainable) continue;
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor && coords.size() > options.max_coords_per_tensor) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (const std::size_t c : coords) {
      const double saved = p.value[c];
      p.value[c] = saved + options.eps;
      const double up = f(params, false);
      p.value[c] = saved - options.eps;
      const double down = f(params, false);
      p.value[c] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw EvaluationError("grad_check: objective not finite while perturbing " + p.name);
      }
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[i][c];
      const double err = relative_error(a, numeric);
      ++result.coords_checked;
      if (err > result.max_rel_err || result.worst_param.empty()) {
        result.max_rel_err = std::max(result.max_rel_err, err);
        if (err >= result.max_rel_err) {
          result.worst_param = p.name;
          result.worst_index = c;
          result.worst_analytic = a;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  // Leave the analytic gradient in place for callers that inspect it.
  for (std::size_t i = 0; i < params.size(); ++i) params[i].grad = analytic[i];
  return result;
}

}  // namespace morphtag
