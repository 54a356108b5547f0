#include "atbp/fit.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace atbp {

namespace {

constexpr double kLogVarLo = -46.0;  // variance box ~ (1e-20, 1e20) in log scale
constexpr double kLogVarHi = 46.0;

const std::array<ParamBounds, 2> kLogVarBox{{{kLogVarLo, kLogVarHi}, {kLogVarLo, kLogVarHi}}};

struct MomentStart {
  double tau2;
  double sigma2;
};

// Method-of-moments warm start from OLS residual statistics.
MomentStart moment_start(const SuffStats& stats, const Eigen::VectorXd& beta_ols) {
  double within_ss = 0.0;
  double within_df = 0.0;
  double total_ss = 0.0;
  double total_n = 0.0;
  std::vector<double> area_means;
  double mean_inv_n = 0.0;
  area_means.reserve(stats.areas.size());
  for (const auto& s : stats.areas) {
    const double ztz =
        s.hth - 2.0 * beta_ols.dot(s.Xth) + beta_ols.dot(s.XtX * beta_ols);
    const double sum_z = s.sum_h - beta_ols.dot(s.Xt1);
    const double u = sum_z * sum_z / s.n;
    within_ss += std::max(ztz - u, 0.0);
    within_df += s.n - 1.0;
    total_ss += std::max(ztz, 0.0);
    total_n += s.n;
    area_means.push_back(sum_z / s.n);
    mean_inv_n += 1.0 / s.n;
  }
  mean_inv_n /= static_cast<double>(stats.areas.size());
  double sigma2 = within_df > 0.0 ? within_ss / within_df : total_ss / total_n;
  sigma2 = std::max(sigma2, 1e-12);
  double tau2 = 0.01 * sigma2;
  if (area_means.size() >= 2) {
    double mean = 0.0;
    for (double v : area_means) mean += v;
    mean /= static_cast<double>(area_means.size());
    double var = 0.0;
    for (double v : area_means) var += (v - mean) * (v - mean);
    var /= static_cast<double>(area_means.size() - 1);
    tau2 = std::max(var - sigma2 * mean_inv_n, 0.01 * sigma2);
  }
  return {tau2, sigma2};
}

InnerFit inner_ml_stats(const SuffStats& stats, const FitConfig& cfg,
                        const MomentStart* warm) {
  InnerFit fit;
  Eigen::VectorXd beta = gls_beta(stats, 0.0, 1.0);  // OLS
  MomentStart start = warm ? *warm : moment_start(stats, beta);
  double tau2 = std::max(start.tau2, 1e-18);
  double sigma2 = std::max(start.sigma2, 1e-18);

  double ll_prev = -std::numeric_limits<double>::infinity();
  double ll = ll_prev;
  constexpr int kMaxRounds = 100;
  int round = 0;
  for (; round < kMaxRounds; ++round) {
    beta = gls_beta(stats, tau2, sigma2);
    auto objective = [&](const Eigen::VectorXd& v) {
      return ner_loglik(stats, beta, std::exp(v[0]), std::exp(v[1]));
    };
    Eigen::VectorXd init(2);
    init << std::log(tau2), std::log(sigma2);
    const SimplexMaxResult nm = nelder_mead_max(objective, init, cfg.inner_tol,
                                                kLogVarBox, cfg.inner_max_iter);
    tau2 = std::exp(nm.x[0]);
    sigma2 = std::exp(nm.x[1]);
    ll = nm.value;
    fit.evaluations += nm.evaluations;
    if (std::abs(ll - ll_prev) < cfg.inner_tol) {
      fit.converged = true;
      ++round;
      break;
    }
    ll_prev = ll;
  }
  beta = gls_beta(stats, tau2, sigma2);

  fit.beta = std::move(beta);
  fit.tau2 = tau2;
  fit.sigma2 = sigma2;
  fit.loglik = ner_loglik(stats, fit.beta, tau2, sigma2) + stats.sum_log_jac;
  fit.rounds = round;
  return fit;
}

std::vector<ParamBounds> box_or_default(const FitConfig& cfg,
                                        const TransformFamily& family,
                                        std::span<const AreaData> data) {
  if (!cfg.transform_box.empty()) {
    if (cfg.transform_box.size() != family.param_count()) {
      throw invalid_input("transform_box dimension does not match the family");
    }
    return cfg.transform_box;
  }
  return default_transform_box(family, data);
}

struct GridScan {
  double best_x = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<double> xs;
  std::vector<double> values;
};

}  // namespace

void FitConfig::validate() const {
  if (!(outer_tol > 0.0) || !(inner_tol > 0.0)) {
    throw invalid_input("fit config: tolerances must be > 0");
  }
  if (outer_max_iter < 1 || inner_max_iter < 1 || grid_points < 2) {
    throw invalid_input("fit config: iteration/grid counts out of range");
  }
}

std::vector<ParamBounds> default_transform_box(const TransformFamily& family,
                                               std::span<const AreaData> data) {
  switch (family.id()) {
    case TransformId::dp:
      return {{1e-5, 3.0}};
    case TransformId::ss:
      return {{-5.0, 5.0}, {0.05, 5.0}};
    case TransformId::sdp: {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (const auto& a : data) {
        lo = std::min(lo, a.y.minCoeff());
        hi = std::max(hi, a.y.maxCoeff());
      }
      if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw invalid_input("sdp box: data required to derive the offset interval");
      }
      const double range = hi - lo;
      const double delta = std::max(1e-6 * range, 1e-12);
      // offset must keep y + c positive for every observation
      return {{1e-5, 3.0}, {-lo + delta, -lo + 10.0 * range + 1.0}};
    }
    case TransformId::log:
    case TransformId::identity:
      return {};
  }
  return {};
}

InnerFit inner_ml(std::span<const AreaData> data, const TransformFamily& family,
                  const TransformParams& tp, const FitConfig& cfg) {
  cfg.validate();
  family.validate(tp);
  const SuffStats stats = build_suff_stats(data, family, tp);
  return inner_ml_stats(stats, cfg, nullptr);
}

double profile_loglik(std::span<const AreaData> data, const TransformFamily& family,
                      const TransformParams& tp, const FitConfig& cfg) {
  return inner_ml(data, family, tp, cfg).loglik;
}

namespace {

Eigen::MatrixXd invert_fisher(const Eigen::MatrixXd& fisher, double& rcond) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fisher);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double emax = ev.cwiseAbs().maxCoeff();
  const double emin = ev.cwiseAbs().minCoeff();
  rcond = emax > 0 ? emin / emax : 0.0;
  if (!(emax > 0) || ev.minCoeff() <= emax * 1e-14) {
    return Eigen::MatrixXd::Constant(fisher.rows(), fisher.cols(),
                                     std::numeric_limits<double>::quiet_NaN());
  }
  return eig.eigenvectors() * ev.cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace

Eigen::MatrixXd fisher_information(std::span<const AreaData> data,
                                   const ModelParams& params,
                                   const TransformFamily& family) {
  params.validate();
  family.validate(params.transform);
  const Eigen::Index p = data.front().X.cols();
  const Eigen::Index q = static_cast<Eigen::Index>(family.param_count());
  const Eigen::Index d = p + 2 + q;
  const double tau2 = params.tau2;
  const double sigma2 = params.sigma2;

  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(d, d);
  std::vector<double> h;
  for (const auto& area : data) {
    const Eigen::Index n = area.n();
    const double nd = static_cast<double>(n);
    const double a = 1.0 / (sigma2 + nd * tau2);
    const double b = 1.0 / sigma2;

    const Eigen::VectorXd Xt1 = area.X.colwise().sum();
    // I_bb = X' Sigma^{-1} X
    F.topLeftCorner(p, p).noalias() +=
        b * (area.X.transpose() * area.X) + (a - b) / nd * (Xt1 * Xt1.transpose());
    // variance block: no expectations needed (Theorem-1 closed forms)
    F(p, p) += 0.5 * (nd * a) * (nd * a);
    F(p, p + 1) += 0.5 * nd * a * a;
    F(p + 1, p + 1) += 0.5 * (a * a + (nd - 1.0) * b * b);

    if (q > 0) {
      h.resize(static_cast<std::size_t>(n));
      family.forward(std::span<const double>(area.y.data(), static_cast<std::size_t>(n)),
                     params.transform, h);
      Eigen::Map<const Eigen::VectorXd> hv(h.data(), n);
      const Eigen::VectorXd z = hv - area.X * params.beta;
      const Eigen::VectorXd siz = sigma_solve(tau2, sigma2, z);
      const double sum_z = z.sum();

      Eigen::MatrixXd H1(n, q);           // dH/dparam per unit
      Eigen::MatrixXd zH2 = Eigen::MatrixXd::Zero(q, q);   // sum_j (Sigma^-1 z)_j H2_j
      Eigen::MatrixXd LJ2 = Eigen::MatrixXd::Zero(q, q);   // sum_j d2 log H'/dparam2
      for (Eigen::Index j = 0; j < n; ++j) {
        H1.row(j) = family.param_gradient(area.y[j], params.transform).transpose();
        zH2 += siz[j] * family.param_hessian(area.y[j], params.transform);
        LJ2 += family.log_jacobian_param_hessian(area.y[j], params.transform);
      }
      const Eigen::VectorXd h1sum = H1.colwise().sum();
      // I_lb = -X' Sigma^{-1} H1   (q x p, stored transposed below)
      const Eigen::MatrixXd XtSiH1 =
          b * (area.X.transpose() * H1) + (a - b) / nd * (Xt1 * h1sum.transpose());
      F.block(p + 2, 0, q, p) -= XtSiH1.transpose();
      // I_lt = -(1'Sigma^{-1}z)(1'Sigma^{-1}H1_k)
      F.block(p + 2, p, q, 1) -= (a * sum_z) * (a * h1sum);
      // I_ls = -z' Sigma^{-2} H1_k
      const Eigen::VectorXd ztH1 = H1.transpose() * z;
      F.block(p + 2, p + 1, q, 1) -=
          a * a / nd * sum_z * h1sum + b * b * (ztH1 - sum_z / nd * h1sum);
      // I_ll = H1'Sigma^{-1}H1 + z'Sigma^{-1}H2 - sum d2 log H'/dparam2
      F.block(p + 2, p + 2, q, q) +=
          b * (H1.transpose() * H1) + (a - b) / nd * (h1sum * h1sum.transpose()) + zH2 -
          LJ2;
    }
  }
  // mirror to the upper triangle, then symmetrize
  F.topRightCorner(p, q) = F.bottomLeftCorner(q, p).transpose();
  F.block(p, p + 2, 1, q) = F.block(p + 2, p, q, 1).transpose();
  F.block(p + 1, p + 2, 1, q) = F.block(p + 2, p + 1, q, 1).transpose();
  F(p + 1, p) = F(p, p + 1);
  return 0.5 * (F + F.transpose());
}

namespace {

FittedModel assemble(std::span<const AreaData> data, const TransformFamily& family,
                     const TransformParams& tp, const InnerFit& inner,
                     Convergence convergence) {
  FittedModel model;
  model.family = family;
  model.params.beta = inner.beta;
  model.params.tau2 = inner.tau2;
  model.params.sigma2 = inner.sigma2;
  model.params.transform = tp;
  model.loglik = inner.loglik;
  model.m = static_cast<int>(data.size());
  model.p = data.front().X.cols();
  model.q = static_cast<Eigen::Index>(family.param_count());
  for (const auto& a : data) model.total_n += a.n();
  model.fisher = fisher_information(data, model.params, family);
  const Eigen::MatrixXd inv = invert_fisher(model.fisher, model.fisher_rcond);
  model.se = inv.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (!inv.allFinite()) {
    model.se = Eigen::VectorXd::Constant(model.dim(),
                                         std::numeric_limits<double>::quiet_NaN());
  }
  const double dim = static_cast<double>(model.dim());
  model.aic = -2.0 * model.loglik + 2.0 * dim;
  model.bic = -2.0 * model.loglik + std::log(static_cast<double>(model.total_n)) * dim;
  convergence.inner_rounds = inner.rounds;
  convergence.inner_evaluations += inner.evaluations;
  model.convergence = std::move(convergence);
  return model;
}

}  // namespace

FittedModel fit_model(std::span<const AreaData> data, const TransformFamily& family,
                      const FitConfig& cfg) {
  cfg.validate();
  if (data.size() < 2) throw invalid_input("fit_model: need at least 2 areas");

  const std::size_t q = family.param_count();
  Convergence conv;

  if (q == 0) {
    const InnerFit inner = inner_ml(data, family, TransformParams{}, cfg);
    conv.converged = inner.converged;
    if (!inner.converged) conv.stage = "inner maximum-likelihood";
    return assemble(data, family, TransformParams{}, inner, conv);
  }

  std::vector<ParamBounds> box = box_or_default(cfg, family, data);
  const bool pinned_offset =
      family.id() == TransformId::sdp && cfg.fixed_offset.has_value();
  if (pinned_offset) {
    // single-parameter profile over lambda with the offset held fixed
    const double c = *cfg.fixed_offset;
    if (!box[1].contains(c)) {
      std::ostringstream os;
      os << "fixed sdp offset " << c << " violates positivity: need offset in ("
         << box[1].lo << ", " << box[1].hi << ")";
      throw invalid_input(os.str());
    }
  }

  // Warm starts chain through the deterministic outer evaluation sequence.
  MomentStart warm{0.0, 0.0};
  bool have_warm = false;
  int outer_evals = 0;
  auto eval_pl = [&](const TransformParams& tp) {
    const SuffStats stats = build_suff_stats(data, family, tp);
    const InnerFit f = inner_ml_stats(stats, cfg, have_warm ? &warm : nullptr);
    warm = {f.tau2, f.sigma2};
    have_warm = true;
    ++outer_evals;
    return f.loglik;
  };

  TransformParams tp_hat;
  const bool scalar_outer = (q == 1) || pinned_offset;
  if (scalar_outer) {
    auto make_tp = [&](double lambda) {
      return pinned_offset ? TransformParams{{lambda, *cfg.fixed_offset}}
                           : TransformParams{{lambda}};
    };
    auto f = [&](double lambda) { return eval_pl(make_tp(lambda)); };
    const double lo = box[0].lo;
    const double hi = box[0].hi;
    ScalarMaxResult gs = golden_section_max(f, lo, hi, cfg.outer_tol, cfg.outer_max_iter);

    // Unimodality of PL is assumed, not verified; a coarse grid re-check
    // restarts the search when it lands in a different basin.
    const int G = cfg.grid_points;
    std::vector<double> xs(G), vals(G);
    const double inset = 1e-8 * (hi - lo);
    for (int i = 0; i < G; ++i) {
      xs[i] = std::clamp(lo + (hi - lo) * i / (G - 1.0), lo + inset, hi - inset);
    }
    for (int i = 0; i < G; ++i) vals[i] = f(xs[i]);
    const int ibest =
        static_cast<int>(std::max_element(vals.begin(), vals.end()) - vals.begin());
    if (std::abs(xs[ibest] - gs.x) > 10.0 * cfg.outer_tol) {
      conv.grid_guard_restart = true;
      const double sub_lo = xs[std::max(ibest - 1, 0)];
      const double sub_hi = xs[std::min(ibest + 1, G - 1)];
      const ScalarMaxResult gs2 =
          golden_section_max(f, sub_lo, sub_hi, cfg.outer_tol, cfg.outer_max_iter);
      if (gs2.value > gs.value) gs = gs2;
    }
    tp_hat = make_tp(gs.x);
    conv.outer_bracket = gs.bracket;
    conv.converged = gs.bracket <= cfg.outer_tol;
    if (!conv.converged) conv.stage = "outer golden-section";
  } else {
    // two transformation parameters: simplex search seeded from the better of
    // the box centre and a coarse 3x3 scan
    auto finite_or = [](double v, double fallback) {
      return std::isfinite(v) ? v : fallback;
    };
    Eigen::VectorXd init(2);
    for (int k = 0; k < 2; ++k) {
      const double lo = finite_or(box[k].lo, -1.0);
      const double hi = finite_or(box[k].hi, lo + 2.0);
      init[k] = 0.5 * (lo + hi);
    }
    if (family.id() == TransformId::sdp) {
      init[0] = 0.5;
      init[1] = box[1].lo + 1.0;  // just inside positivity, near the min(y)+1 heuristic
    }
    auto fvec = [&](const Eigen::VectorXd& v) {
      return eval_pl(TransformParams{{v[0], v[1]}});
    };
    double best_grid = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd grid_x = init;
    for (int i = 1; i <= 3; ++i) {
      for (int j = 1; j <= 3; ++j) {
        Eigen::VectorXd v(2);
        v[0] = finite_or(box[0].lo, init[0] - 1.0) +
               (finite_or(box[0].hi, init[0] + 1.0) - finite_or(box[0].lo, init[0] - 1.0)) *
                   i / 4.0;
        v[1] = finite_or(box[1].lo, init[1] - 1.0) +
               (finite_or(box[1].hi, init[1] + 1.0) - finite_or(box[1].lo, init[1] - 1.0)) *
                   j / 4.0;
        const double val = fvec(v);
        if (val > best_grid) {
          best_grid = val;
          grid_x = v;
        }
      }
    }
    const double init_val = fvec(init);
    const SimplexMaxResult nm = nelder_mead_max(
        fvec, init_val >= best_grid ? init : grid_x, cfg.outer_tol * 1e-2, box,
        cfg.outer_max_iter * 4);
    tp_hat = TransformParams{{nm.x[0], nm.x[1]}};
    conv.outer_bracket = 0.0;
    conv.converged = nm.converged;
    if (!nm.converged) conv.stage = "outer simplex";
  }
  conv.outer_evaluations = outer_evals;

  // Final inner fit is cold-started so the result depends only on tp_hat.
  const InnerFit inner = inner_ml(data, family, tp_hat, cfg);
  conv.converged = conv.converged && inner.converged;
  if (!inner.converged) conv.stage = "inner maximum-likelihood";
  return assemble(data, family, tp_hat, inner, conv);
}

std::vector<Residual> standardized_residuals(std::span<const AreaData> data,
                                             const FittedModel& fitted) {
  const double denom = std::sqrt(fitted.params.tau2 + fitted.params.sigma2);
  std::vector<Residual> out;
  std::vector<double> h;
  for (const auto& area : data) {
    const Eigen::Index n = area.n();
    h.resize(static_cast<std::size_t>(n));
    fitted.family.forward(
        std::span<const double>(area.y.data(), static_cast<std::size_t>(n)),
        fitted.params.transform, h);
    for (Eigen::Index j = 0; j < n; ++j) {
      out.push_back({area.id, j, (h[static_cast<std::size_t>(j)] -
                                  area.X.row(j).dot(fitted.params.beta)) /
                                     denom});
    }
  }
  return out;
}

}  // namespace atbp
