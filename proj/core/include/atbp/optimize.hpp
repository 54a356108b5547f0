#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>

#include "atbp/transform.hpp"  // ParamBounds

namespace atbp {

struct ScalarMaxResult {
  double x = 0;
  double value = 0;
  int evaluations = 0;
  double bracket = 0;  // final bracket width
};

/// Golden-section maximization on [lo, hi]. The function is assumed unimodal
/// (not verified); for unimodal f the result is within tol of the maximizer.
/// Throws numeric_error when f returns a non-finite value, naming the point.
ScalarMaxResult golden_section_max(const std::function<double(double)>& f, double lo,
                                   double hi, double tol, int max_iter = 200);

struct SimplexMaxResult {
  Eigen::VectorXd x;
  double value = 0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead maximization with reflection/expansion/contraction/shrink
/// coefficients (1, 2, 0.5, 0.5). Terminates when the simplex function-value
/// spread drops below tol. Proposals are clamped into the open box minus a
/// 1e-8 margin. On an exhausted iteration budget the best point is returned
/// with converged=false.
SimplexMaxResult nelder_mead_max(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& init,
    double tol, std::span<const ParamBounds> box, int max_iter = 500,
    double initial_step = 0.10);

}  // namespace atbp
