#pragma once

// Independent test oracles: dense-matrix likelihood evaluation, closed-form
// transformation derivatives, finite differences, the normal CDF and small
// random-instance builders. Nothing here reuses the rank-one production
// paths it is meant to check.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "atbp/data.hpp"
#include "atbp/rng.hpp"
#include "atbp/transform.hpp"

namespace oracle {

inline Eigen::MatrixXd dense_sigma(Eigen::Index n, double tau2, double sigma2) {
  return Eigen::MatrixXd::Constant(n, n, tau2) +
         sigma2 * Eigen::MatrixXd::Identity(n, n);
}

/// Marginal log-likelihood evaluated with dense covariance algebra.
inline double dense_marginal_loglik(std::span<const atbp::AreaData> data,
                                    const atbp::ModelParams& params,
                                    const atbp::TransformFamily& family) {
  constexpr double kLog2Pi = 1.8378770664093454836;
  double ll = 0.0;
  for (const auto& area : data) {
    const Eigen::Index n = area.n();
    Eigen::VectorXd h(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      h[j] = family.forward(area.y[j], params.transform);
      ll += family.log_jacobian(area.y[j], params.transform);
    }
    const Eigen::MatrixXd sigma = dense_sigma(n, params.tau2, params.sigma2);
    const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    const Eigen::VectorXd z = h - area.X * params.beta;
    const Eigen::VectorXd siz = llt.solve(z);
    double logdet = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
    ll += -0.5 * (logdet + z.dot(siz) + static_cast<double>(n) * kLog2Pi);
  }
  return ll;
}

/// Central finite-difference gradient of f.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double rel_step = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = rel_step * (1.0 + std::abs(x[k]));
    Eigen::VectorXd lo = x;
    Eigen::VectorXd hi = x;
    lo[k] -= h;
    hi[k] += h;
    g[k] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

/// Central finite-difference Hessian of f (step eps^(1/4)).
inline Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& x) {
  const double base = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  const Eigen::Index d = x.size();
  Eigen::MatrixXd out(d, d);
  const double f0 = f(x);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double hk = base * (1.0 + std::abs(x[k]));
    Eigen::VectorXd up = x;
    Eigen::VectorXd dn = x;
    up[k] += hk;
    dn[k] -= hk;
    out(k, k) = (f(up) - 2.0 * f0 + f(dn)) / (hk * hk);
    for (Eigen::Index l = k + 1; l < d; ++l) {
      const double hl = base * (1.0 + std::abs(x[l]));
      Eigen::VectorXd pp = x, pm = x, mp = x, mm = x;
      pp[k] += hk; pp[l] += hl;
      pm[k] += hk; pm[l] -= hl;
      mp[k] -= hk; mp[l] += hl;
      mm[k] -= hk; mm[l] -= hl;
      out(k, l) = out(l, k) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * hk * hl);
    }
  }
  return out;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// d H^dp_lambda / d lambda, closed form.
inline double dp_dlambda(double x, double lambda) {
  const double lx = std::log(x);
  const double xl = std::pow(x, lambda);
  const double xml = std::pow(x, -lambda);
  return (xl * lx + xml * lx) / (2.0 * lambda) - (xl - xml) / (2.0 * lambda * lambda);
}

/// d^2 H^dp_lambda / d lambda^2, closed form (derived from sinh(l L)/l).
inline double dp_d2lambda(double x, double lambda) {
  const double L = std::log(x);
  const double s = std::sinh(lambda * L);
  const double c = std::cosh(lambda * L);
  return L * L * s / lambda - 2.0 * L * c / (lambda * lambda) +
         2.0 * s / (lambda * lambda * lambda);
}

/// d^2 log H'^dp / d lambda^2, closed form: (log x)^2 / cosh^2(lambda log x).
inline double dp_d2_log_jac(double x, double lambda) {
  const double L = std::log(x);
  const double c = std::cosh(lambda * L);
  return L * L / (c * c);
}

inline double ss_da(double x, double a, double b) {
  return -std::cosh(b * std::asinh(x) - a);
}

inline double ss_db(double x, double a, double b) {
  return std::cosh(b * std::asinh(x) - a) * std::asinh(x);
}

/// Small random NER instance on the data scale (responses positive so every
/// family applies).
inline std::vector<atbp::AreaData> random_instance(atbp::Rng& rng, int m, int max_n,
                                                   int p, const atbp::TransformFamily& family,
                                                   const atbp::TransformParams& tp,
                                                   const Eigen::VectorXd& beta, double tau,
                                                   double sigma) {
  std::vector<atbp::AreaData> data;
  for (int i = 0; i < m; ++i) {
    const int n = 1 + static_cast<int>(rng.next() % static_cast<std::uint64_t>(max_n));
    atbp::AreaData area;
    area.id = "a" + std::to_string(i);
    area.X.resize(n, p);
    for (int j = 0; j < n; ++j) {
      area.X(j, 0) = 1.0;
      for (int k = 1; k < p; ++k) area.X(j, k) = rng.uniform(1.0, 2.0);
    }
    area.y.resize(n);
    const double v = tau * rng.normal();
    for (int j = 0; j < n; ++j) {
      const double u = area.X.row(j).dot(beta) + v + sigma * rng.normal();
      area.y[j] = family.inverse(u, tp);
    }
    data.push_back(std::move(area));
  }
  return data;
}

}  // namespace oracle
