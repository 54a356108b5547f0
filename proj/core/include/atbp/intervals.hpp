#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atbp/data.hpp"
#include "atbp/fit.hpp"
#include "atbp/predict.hpp"

namespace atbp {

struct IntervalResult {
  enum class Method { naive, calibrated };

  std::string area_id;
  double lower = 0;
  double upper = 0;
  double alpha = 0;              // nominal level is 1 - alpha
  std::optional<double> a_star;  // calibrated level (calibrated only)
  Method method = Method::naive;
  int L_post = 0;
  int B = 0;           // bootstrap worlds used (calibrated only)
  bool flagged = false;  // calibration pinned at a bracket endpoint
};

/// Naive empirical Bayes interval: plug-in posterior quantiles
/// (Q_{alpha/2}, Q_{1-alpha/2}). The posterior stream is keyed by
/// (seed, area index) and shared with calibrated_interval, so the calibrated
/// interval at a* = alpha reproduces the naive one exactly.
IntervalResult naive_interval(const FittedModel& fitted, const FinitePopulation& pop,
                              std::size_t area_index, const TargetFunction& T,
                              double alpha, int L_post, std::uint64_t seed);

/// One parametric bootstrap world: every unit of every area regenerated from
/// the fitted model, the original sampling pattern applied, and the world's
/// true mu_i computed from its full population.
struct BootstrapWorld {
  FinitePopulation population;            // sampled y filled with bootstrap values
  std::vector<Eigen::VectorXd> full_y;    // all N_i responses per area
  Eigen::VectorXd mu_star;                // per-area bootstrap truth
};

BootstrapWorld bootstrap_world(const FittedModel& fitted, const FinitePopulation& pop,
                               const TargetFunction& T, Rng& rng);

/// B bootstrap worlds with per-area sorted posterior draws and bootstrap
/// truths, built once and shared across nominal levels (common random
/// numbers) and across areas. With refit=true each world's interval uses
/// parameters re-estimated from that world's sample; refit=false uses the
/// plug-in estimates (the paper's literal formula, under which CP(a) = 1-a
/// up to Monte-Carlo error).
struct BootstrapEnsemble {
  std::vector<std::size_t> area_indices;            // population indices covered
  std::vector<std::vector<std::vector<double>>> draws;  // [world][area pos] sorted
  std::vector<Eigen::VectorXd> mu_star;             // [world] per covered area
  int B = 0;
  int dropped = 0;
  std::string first_drop_reason;
};

BootstrapEnsemble build_bootstrap_ensemble(const FittedModel& fitted,
                                           const FinitePopulation& pop,
                                           const TargetFunction& T, int B, int L_post,
                                           bool refit, const FitConfig& fit_cfg,
                                           std::uint64_t seed, unsigned threads = 1,
                                           std::span<const std::size_t> areas = {});

/// CP(a) for one covered area of an ensemble: the fraction of worlds whose
/// interval (Q_{a/2}, Q_{1-a/2}) contains that world's truth.
double cp_from_ensemble(const BootstrapEnsemble& ensemble, std::size_t area_pos,
                        double a);

/// Bootstrap coverage estimate for one area (builds a fresh ensemble).
/// More than 10% dropped worlds is an error.
double coverage_estimate(const FittedModel& fitted, const FinitePopulation& pop,
                         std::size_t area_index, const TargetFunction& T, double a,
                         int B, int L_post, bool refit, const FitConfig& fit_cfg,
                         std::uint64_t seed, unsigned threads = 1);

struct CalibratedLevel {
  double a_star = 0;
  double cp_at_a_star = 0;
  bool flagged = false;  // target coverage unreachable inside the bracket
  int iterations = 0;
};

/// Bisection for CP(a*) = 1 - alpha on a in [alpha/10, min(10 alpha, 0.5)].
/// cp must be non-increasing in a (guaranteed under common random numbers).
/// Stops when |CP - (1-alpha)| <= cp_tol or the bracket is below 1e-4.
CalibratedLevel calibrate_on_cp(const std::function<double(double)>& cp, double alpha,
                                double cp_tol, double bracket_tol = 1e-4);

/// Per-area calibrated nominal level over a fixed set of B bootstrap worlds.
CalibratedLevel calibrate_level(const FittedModel& fitted, const FinitePopulation& pop,
                                std::size_t area_index, const TargetFunction& T,
                                double alpha, int B, int L_post, bool refit,
                                const FitConfig& fit_cfg, std::uint64_t seed,
                                unsigned threads = 1);

/// Calibrated interval: the naive machinery evaluated at a*. L_post_world
/// is the (usually smaller) posterior sample size inside bootstrap worlds.
IntervalResult calibrated_interval(const FittedModel& fitted, const FinitePopulation& pop,
                                   std::size_t area_index, const TargetFunction& T,
                                   double alpha, int B, int L_post, int L_post_world,
                                   bool refit, const FitConfig& fit_cfg,
                                   std::uint64_t seed, unsigned threads = 1);

}  // namespace atbp
