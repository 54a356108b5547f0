#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "atbp/data.hpp"
#include "atbp/transform.hpp"

// Exact linear algebra for the nested error regression model on the model
// scale. The area covariance Sigma_i = sigma2 I + tau2 11^t is never formed:
// its eigenstructure (eigenvalue sigma2 + n tau2 on the constant direction,
// sigma2 on contrasts) gives every solve, determinant and trace in O(n).

namespace atbp {

/// Sigma_i^{-1} v via the rank-one identity; O(n), no dense inverse.
Eigen::VectorXd sigma_solve(double tau2, double sigma2, const Eigen::VectorXd& v);

/// log |Sigma_i| = (n-1) log sigma2 + log(sigma2 + n tau2).
double log_det_sigma(Eigen::Index n, double tau2, double sigma2);

/// Per-area sufficient statistics of the transformed sample. Everything the
/// NER likelihood needs at any (beta, tau2, sigma2) is a function of these,
/// so one O(n p^2) pass per transformation-parameter value makes every
/// inner-optimizer evaluation O(m p^2).
struct AreaSuffStats {
  double n = 0;
  Eigen::MatrixXd XtX;  // p x p
  Eigen::VectorXd Xt1;  // p (column sums of X)
  Eigen::VectorXd Xth;  // p
  double hth = 0;
  double sum_h = 0;
};

struct SuffStats {
  std::vector<AreaSuffStats> areas;
  double sum_log_jac = 0;  // sum of log H'(y_ij)
  Eigen::Index p = 0;
  long total_n = 0;
};

/// Transforms the data under (family, tp) and accumulates statistics.
/// Throws invalid_input when an observation is outside the transform domain.
SuffStats build_suff_stats(std::span<const AreaData> data, const TransformFamily& family,
                           const TransformParams& tp);

/// NER log-likelihood of the transformed data (Jacobian term excluded),
/// including the Gaussian normalizing constant.
double ner_loglik(const SuffStats& stats, const Eigen::VectorXd& beta, double tau2,
                  double sigma2);

/// GLS estimate of beta for fixed variances. Throws numeric_error when the
/// normal equations are numerically rank-deficient.
Eigen::VectorXd gls_beta(const SuffStats& stats, double tau2, double sigma2);

/// GLS on already-transformed data (AreaData::y holds model-scale values).
Eigen::VectorXd gls_beta(std::span<const AreaData> transformed, double tau2,
                         double sigma2);

/// Log-marginal likelihood of phi: Gaussian NER part plus the Jacobian term.
double marginal_loglik(std::span<const AreaData> data, const ModelParams& params,
                       const TransformFamily& family);

/// Analytic score of the marginal log-likelihood in the order
/// (beta_1..beta_p, tau2, sigma2, transform params...). The transformation
/// components use numerical dH/dparams.
Eigen::VectorXd score(std::span<const AreaData> data, const ModelParams& params,
                      const TransformFamily& family);

}  // namespace atbp
