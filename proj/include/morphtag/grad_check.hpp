#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "morphtag/param_store.hpp"

namespace morphtag {

struct GradCheckOptions {
  double eps = 1e-4;
  // Coordinates checked per tensor; 0 checks every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Scalar objective over the store. When compute_grad is set the callee
// must leave d(objective)/d(param) in every trainable grad tensor.
using Objective = std::function<double(ParamStore<double>&, bool compute_grad)>;

// Central-difference check of the analytic gradient over trainable entries.
GradCheckResult grad_check(const Objective& f, ParamStore<double>& params,
                           const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric);

}  // namespace morphtag
