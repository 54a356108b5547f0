#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "atbp/data.hpp"
#include "atbp/fit.hpp"
#include "atbp/rng.hpp"

namespace atbp {

/// Conditional law of the non-sampled transformed values of one area given
/// the area's sample: H(Y_ij) | y_s ~ N(theta_ij, s^2 + sigma^2), with all
/// units sharing one draw of the area effect (scale s) plus independent unit
/// noise (scale sigma).
struct ConditionalLaw {
  std::vector<Eigen::Index> unit_rows;  // population row of each non-sampled unit
  Eigen::VectorXd theta;                // shrinkage means, same order
  double s = 0;                         // posterior sd of the area effect
  double sigma = 0;                     // unit-error sd

  double total_var() const { return s * s + sigma * sigma; }
};

ConditionalLaw conditional_law(const FittedModel& fitted, const FinitePopulation& pop,
                               std::size_t area_index);

/// (1/L) sum T(H^{-1}(u_l)), u_l iid N(theta, var). Draws whose inverse
/// overflows are redrawn; more than 1% redraws is an error. var = 0 returns
/// T(H^{-1}(theta)) without consuming randomness.
double mc_expectation(const TargetFunction& T, const TransformFamily& family,
                      const TransformParams& tp, double theta, double var, int L,
                      Rng& rng);

struct AreaPrediction {
  std::string area_id;
  Eigen::Index n = 0;
  Eigen::Index N = 0;
  double mu_hat = 0;
  double mc_se = 0;  // Monte-Carlo standard error of the non-sampled part
};

/// Adaptively transformed best predictor with plug-in parameter estimates:
/// mu~_i = (1/N_i) { sum_sampled T(y_ij) + sum_non-sampled E[T(H^-1(u_ij))] }.
/// Per-area rng streams are derived from (seed, area index), so results do
/// not depend on evaluation order.
std::vector<AreaPrediction> atbp_predict(const FittedModel& fitted,
                                         const FinitePopulation& pop,
                                         const TargetFunction& T, int L,
                                         std::uint64_t seed, unsigned threads = 1);

/// L_post draws from the posterior of mu_i: each replicate shares one area
/// draw z_i across the non-sampled units and adds independent unit noise,
///   mu^(l) = (1/N_i){ sum T(y) + sum T(H^-1(theta_ij + s z + sigma w_ij)) }.
std::vector<double> posterior_draws(const FittedModel& fitted,
                                    const FinitePopulation& pop, std::size_t area_index,
                                    const TargetFunction& T, int L_post, Rng& rng);

/// Empirical quantile with linear interpolation between order statistics
/// (type-7 convention). `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double a);
/// Convenience overload that sorts a copy.
double quantile(std::vector<double> draws, double a);

}  // namespace atbp
