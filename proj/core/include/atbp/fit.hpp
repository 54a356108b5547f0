#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atbp/data.hpp"
#include "atbp/ner.hpp"
#include "atbp/optimize.hpp"
#include "atbp/transform.hpp"

namespace atbp {

struct FitConfig {
  double outer_tol = 1e-4;   // transformation-parameter scale
  double inner_tol = 1e-8;   // log-likelihood scale
  int outer_max_iter = 200;
  int inner_max_iter = 500;
  int grid_points = 11;  // PL grid guard against multimodal profiles
  /// Search box for the transformation parameters; empty selects the
  /// family defaults (dp: lambda in (1e-5, 3); ss: a in (-5,5), b in (0.05,5);
  /// sdp offset box derived from the data range).
  std::vector<ParamBounds> transform_box;
  /// Fit sdp with the offset pinned (single-parameter profile over lambda).
  std::optional<double> fixed_offset;
  unsigned threads = 1;

  void validate() const;
};

/// Default outer search box for a family; sdp derives the offset interval
/// from the pooled response range (offset > -min(y) + 1e-6 * range).
std::vector<ParamBounds> default_transform_box(const TransformFamily& family,
                                               std::span<const AreaData> data);

struct InnerFit {
  Eigen::VectorXd beta;
  double tau2 = 0;
  double sigma2 = 0;
  double loglik = 0;  // full marginal log-likelihood (Jacobian term included)
  bool converged = false;
  int rounds = 0;
  int evaluations = 0;
};

/// ML over (beta, tau2, sigma2) for fixed transformation parameters:
/// GLS beta-updates alternated with Nelder-Mead over (log tau2, log sigma2)
/// until the log-likelihood gain drops below inner_tol.
InnerFit inner_ml(std::span<const AreaData> data, const TransformFamily& family,
                  const TransformParams& tp, const FitConfig& cfg);

/// PL(tp): the transformed-scale maximum likelihood plus the Jacobian term.
/// Equals marginal_loglik at the inner_ml optimum.
double profile_loglik(std::span<const AreaData> data, const TransformFamily& family,
                      const TransformParams& tp, const FitConfig& cfg);

struct Convergence {
  bool converged = false;
  int outer_evaluations = 0;
  double outer_bracket = 0;  // final bracket width (golden section) or simplex spread
  int inner_rounds = 0;
  int inner_evaluations = 0;
  bool grid_guard_restart = false;
  std::string stage;  // failure stage label when not converged
};

struct FittedModel {
  ModelParams params;  // MLE of (beta, tau2, sigma2, transform params)
  TransformFamily family = TransformFamily::make(TransformId::identity);
  double loglik = 0;       // marginal log-likelihood at the MLE
  Eigen::MatrixXd fisher;  // (p+2+q) x (p+2+q), order (beta, tau2, sigma2, tp)
  Eigen::VectorXd se;      // sqrt(diag(fisher^-1)); NaN when singular
  double fisher_rcond = 0;
  double aic = 0;
  double bic = 0;
  Convergence convergence;
  int m = 0;
  long total_n = 0;
  Eigen::Index p = 0;
  Eigen::Index q = 0;

  Eigen::Index dim() const { return p + 2 + q; }
  /// SE of a transformation parameter (k < q).
  double transform_se(Eigen::Index k) const { return se[p + 2 + k]; }
};

/// Full fit: profile-likelihood maximization over the transformation
/// parameters (golden section for one, Nelder-Mead for two), inner ML at the
/// maximizer, Fisher information with sample-counterpart expectations, SEs,
/// AIC/BIC. Deterministic: same data and config give a bit-identical result.
FittedModel fit_model(std::span<const AreaData> data, const TransformFamily& family,
                      const FitConfig& cfg);

/// Fisher information of Theorem-1 form with expectations replaced by their
/// sample counterparts; symmetric, order (beta, tau2, sigma2, tp).
Eigen::MatrixXd fisher_information(std::span<const AreaData> data,
                                   const ModelParams& params,
                                   const TransformFamily& family);

struct Residual {
  std::string area_id;
  Eigen::Index unit = 0;
  double r = 0;
};

/// r_ij = (H(y_ij) - x_ij' beta) / sqrt(tau2 + sigma2).
std::vector<Residual> standardized_residuals(std::span<const AreaData> data,
                                             const FittedModel& fitted);

}  // namespace atbp
