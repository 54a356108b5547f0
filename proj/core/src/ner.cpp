#include "atbp/ner.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <sstream>

namespace atbp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_variances(double tau2, double sigma2) {
  if (!(sigma2 > 0.0)) throw invalid_input("sigma2 must be > 0");
  if (!(tau2 >= 0.0)) throw invalid_input("tau2 must be >= 0");
}

// Eigenvalues of Sigma^{-1}: `a` on the constant direction, `b` on contrasts.
struct SigmaInv {
  double a;  // 1 / (sigma2 + n tau2)
  double b;  // 1 / sigma2
  SigmaInv(double n, double tau2, double sigma2)
      : a(1.0 / (sigma2 + n * tau2)), b(1.0 / sigma2) {}
};

}  // namespace

Eigen::VectorXd sigma_solve(double tau2, double sigma2, const Eigen::VectorXd& v) {
  check_variances(tau2, sigma2);
  const double n = static_cast<double>(v.size());
  const double shrink = tau2 / (sigma2 + n * tau2);
  return (v.array() - shrink * v.sum()).matrix() / sigma2;
}

double log_det_sigma(Eigen::Index n, double tau2, double sigma2) {
  check_variances(tau2, sigma2);
  if (n < 1) throw invalid_input("log_det_sigma: n must be >= 1");
  return static_cast<double>(n - 1) * std::log(sigma2) +
         std::log(sigma2 + static_cast<double>(n) * tau2);
}

SuffStats build_suff_stats(std::span<const AreaData> data, const TransformFamily& family,
                           const TransformParams& tp) {
  if (data.empty()) throw invalid_input("no areas");
  SuffStats stats;
  stats.p = data.front().X.cols();
  stats.areas.reserve(data.size());
  std::vector<double> h;
  for (const auto& area : data) {
    if (area.X.cols() != stats.p) {
      throw invalid_input("area " + area.id + ": covariate dimension mismatch");
    }
    if (area.n() < 1) throw invalid_input("area " + area.id + ": no sampled units");
    const std::size_t n = static_cast<std::size_t>(area.n());
    h.resize(n);
    family.forward(std::span<const double>(area.y.data(), n), tp, h);
    stats.sum_log_jac += family.sum_log_jacobian(std::span<const double>(area.y.data(), n), tp);

    AreaSuffStats s;
    s.n = static_cast<double>(n);
    s.XtX.noalias() = area.X.transpose() * area.X;
    s.Xt1 = area.X.colwise().sum();
    Eigen::Map<const Eigen::VectorXd> hv(h.data(), static_cast<Eigen::Index>(n));
    s.Xth.noalias() = area.X.transpose() * hv;
    s.hth = hv.squaredNorm();
    s.sum_h = hv.sum();
    stats.areas.push_back(std::move(s));
    stats.total_n += static_cast<long>(n);
  }
  return stats;
}

double ner_loglik(const SuffStats& stats, const Eigen::VectorXd& beta, double tau2,
                  double sigma2) {
  check_variances(tau2, sigma2);
  double ll = 0.0;
  for (const auto& s : stats.areas) {
    const SigmaInv w(s.n, tau2, sigma2);
    // z = h - X beta through the sufficient statistics
    const double ztz = s.hth - 2.0 * beta.dot(s.Xth) + beta.dot(s.XtX * beta);
    const double sum_z = s.sum_h - beta.dot(s.Xt1);
    const double u = sum_z * sum_z / s.n;          // (1'z)^2 / n
    const double quad = w.a * u + w.b * (ztz - u);  // z' Sigma^{-1} z
    const double logdet = (s.n - 1.0) * std::log(sigma2) + std::log(sigma2 + s.n * tau2);
    ll += -0.5 * (logdet + quad + s.n * kLog2Pi);
  }
  return ll;
}

Eigen::VectorXd gls_beta(const SuffStats& stats, double tau2, double sigma2) {
  check_variances(tau2, sigma2);
  const Eigen::Index p = stats.p;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  for (const auto& s : stats.areas) {
    const SigmaInv w(s.n, tau2, sigma2);
    const double r = (w.a - w.b) / s.n;
    A.noalias() += w.b * s.XtX + r * (s.Xt1 * s.Xt1.transpose());
    b.noalias() += w.b * s.Xth + r * s.Xt1 * s.sum_h;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  const double dmax = A.diagonal().maxCoeff();
  const double dmin = ldlt.vectorD().minCoeff();
  if (ldlt.info() != Eigen::Success || !(dmin > dmax * 1e-12)) {
    std::ostringstream os;
    os << "gls_beta: normal equations numerically rank deficient "
       << "(pivot ratio " << dmin / dmax << ")";
    throw numeric_error(os.str());
  }
  return ldlt.solve(b);
}

Eigen::VectorXd gls_beta(std::span<const AreaData> transformed, double tau2,
                         double sigma2) {
  const auto identity = TransformFamily::make(TransformId::identity);
  const SuffStats stats = build_suff_stats(transformed, identity, TransformParams{});
  return gls_beta(stats, tau2, sigma2);
}

double marginal_loglik(std::span<const AreaData> data, const ModelParams& params,
                       const TransformFamily& family) {
  params.validate();
  family.validate(params.transform);
  const SuffStats stats = build_suff_stats(data, family, params.transform);
  if (params.beta.size() != stats.p) {
    throw invalid_input("marginal_loglik: beta dimension mismatch");
  }
  return ner_loglik(stats, params.beta, params.tau2, params.sigma2) + stats.sum_log_jac;
}

Eigen::VectorXd score(std::span<const AreaData> data, const ModelParams& params,
                      const TransformFamily& family) {
  params.validate();
  family.validate(params.transform);
  const double tau2 = params.tau2;
  const double sigma2 = params.sigma2;
  const Eigen::Index p = data.front().X.cols();
  const Eigen::Index q = static_cast<Eigen::Index>(family.param_count());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p + 2 + q);

  std::vector<double> h;
  for (const auto& area : data) {
    const Eigen::Index n = area.n();
    const double nd = static_cast<double>(n);
    const SigmaInv w(nd, tau2, sigma2);
    h.resize(static_cast<std::size_t>(n));
    family.forward(std::span<const double>(area.y.data(), static_cast<std::size_t>(n)),
                   params.transform, h);
    Eigen::Map<const Eigen::VectorXd> hv(h.data(), n);
    const Eigen::VectorXd z = hv - area.X * params.beta;
    const double sum_z = z.sum();
    const double ztz = z.squaredNorm();
    const double u = sum_z * sum_z / nd;

    // d/dbeta: X' Sigma^{-1} z
    g.head(p).noalias() +=
        w.b * (area.X.transpose() * z) + (w.a - w.b) / nd * area.X.colwise().sum().transpose() * sum_z;
    // d/dtau2: -1/2 1'Sigma^{-1}1 + 1/2 (1'Sigma^{-1}z)^2
    g[p] += -0.5 * nd * w.a + 0.5 * (w.a * sum_z) * (w.a * sum_z);
    // d/dsigma2: -1/2 tr(Sigma^{-1}) + 1/2 z'Sigma^{-2}z
    g[p + 1] += -0.5 * (w.a + (nd - 1.0) * w.b) +
                0.5 * (w.a * w.a * u + w.b * w.b * (ztz - u));

    if (q > 0) {
      // d/dlambda_k: -z' Sigma^{-1} H1_k + sum_j d log H'(y_ij)/dlambda_k
      const Eigen::VectorXd siz = sigma_solve(tau2, sigma2, z);
      for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::VectorXd h1 = family.param_gradient(area.y[j], params.transform);
        const Eigen::VectorXd lj =
            family.log_jacobian_param_gradient(area.y[j], params.transform);
        g.tail(q) += -siz[j] * h1 + lj;
      }
    }
  }
  return g;
}

}  // namespace atbp
