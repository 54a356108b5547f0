#include "atbp/transform.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace atbp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// exp() overflows just above this.
constexpr double kMaxExpArg = 709.0;

// log(cosh(t)) without overflow.
double log_cosh(double t) {
  const double a = std::abs(t);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

[[noreturn]] void throw_domain(TransformId id, double x, double lower) {
  std::ostringstream os;
  os << "transform " << to_string(id) << ": x=" << x
     << " outside domain (" << lower << ", inf)";
  throw invalid_input(os.str());
}

[[noreturn]] void throw_overflow(TransformId id, double u) {
  std::ostringstream os;
  os << "transform " << to_string(id) << ": inverse overflows at u=" << u
     << " (saturates above double range)";
  throw numeric_error(os.str());
}

}  // namespace

TransformId transform_id_from_string(std::string_view name) {
  if (name == "dp") return TransformId::dp;
  if (name == "sdp") return TransformId::sdp;
  if (name == "ss") return TransformId::ss;
  if (name == "log") return TransformId::log;
  if (name == "identity") return TransformId::identity;
  throw invalid_input("unknown transform family '" + std::string(name) +
                      "' (expected dp|sdp|ss|log|identity)");
}

std::string_view to_string(TransformId id) {
  switch (id) {
    case TransformId::dp: return "dp";
    case TransformId::sdp: return "sdp";
    case TransformId::ss: return "ss";
    case TransformId::log: return "log";
    case TransformId::identity: return "identity";
  }
  return "?";
}

TransformFamily TransformFamily::make(TransformId id, double eps_lambda) {
  std::vector<ParamBounds> bounds;
  switch (id) {
    case TransformId::dp:
      bounds = {{0.0, kInf}};
      break;
    case TransformId::sdp:
      bounds = {{0.0, kInf}, {-kInf, kInf}};
      break;
    case TransformId::ss:
      bounds = {{-kInf, kInf}, {0.0, kInf}};
      break;
    case TransformId::log:
    case TransformId::identity:
      break;
  }
  return TransformFamily(id, eps_lambda, std::move(bounds));
}

TransformFamily TransformFamily::make(std::string_view name, double eps_lambda) {
  return make(transform_id_from_string(name), eps_lambda);
}

std::size_t TransformFamily::param_count() const { return bounds_.size(); }

void TransformFamily::validate(const TransformParams& p) const {
  if (p.size() != bounds_.size()) {
    std::ostringstream os;
    os << "transform " << to_string(id_) << ": expected " << bounds_.size()
       << " parameter(s), got " << p.size();
    throw invalid_input(os.str());
  }
  for (std::size_t k = 0; k < bounds_.size(); ++k) {
    if (!std::isfinite(p[k]) || !bounds_[k].contains(p[k])) {
      std::ostringstream os;
      os << "transform " << to_string(id_) << ": parameter " << k << "=" << p[k]
         << " outside open bounds (" << bounds_[k].lo << ", " << bounds_[k].hi << ")";
      throw invalid_input(os.str());
    }
  }
}

double TransformFamily::domain_lower(const TransformParams& p) const {
  switch (id_) {
    case TransformId::dp:
    case TransformId::log:
      return 0.0;
    case TransformId::sdp:
      return -p[1];
    case TransformId::ss:
    case TransformId::identity:
      return -kInf;
  }
  return -kInf;
}

bool TransformFamily::in_domain(double x, const TransformParams& p) const {
  return std::isfinite(x) && x > domain_lower(p);
}

void TransformFamily::check_domain(double x, const TransformParams& p) const {
  if (!in_domain(x, p)) throw_domain(id_, x, domain_lower(p));
}

double TransformFamily::forward(double x, const TransformParams& p) const {
  validate(p);
  check_domain(x, p);
  switch (id_) {
    case TransformId::dp: {
      const double lam = p[0];
      const double lx = std::log(x);
      return lam <= eps_lambda_ ? lx : std::sinh(lam * lx) / lam;
    }
    case TransformId::sdp: {
      const double lam = p[0];
      const double lx = std::log(x + p[1]);
      return lam <= eps_lambda_ ? lx : std::sinh(lam * lx) / lam;
    }
    case TransformId::ss:
      return std::sinh(p[1] * std::asinh(x) - p[0]);
    case TransformId::log:
      return std::log(x);
    case TransformId::identity:
      return x;
  }
  return x;
}

bool TransformFamily::try_inverse(double u, const TransformParams& p,
                                  double& out) const noexcept {
  switch (id_) {
    case TransformId::dp:
    case TransformId::sdp: {
      const double lam = p[0];
      const double t = lam <= eps_lambda_ ? u : std::asinh(lam * u) / lam;
      if (t > kMaxExpArg) return false;
      out = std::exp(t);
      if (id_ == TransformId::sdp) out -= p[1];
      return true;
    }
    case TransformId::ss: {
      const double t = (std::asinh(u) + p[0]) / p[1];
      if (std::abs(t) > kMaxExpArg + 1.0) return false;
      out = std::sinh(t);
      return true;
    }
    case TransformId::log: {
      if (u > kMaxExpArg) return false;
      out = std::exp(u);
      return true;
    }
    case TransformId::identity:
      out = u;
      return true;
  }
  return false;
}

double TransformFamily::inverse(double u, const TransformParams& p) const {
  validate(p);
  double out;
  if (!try_inverse(u, p, out)) throw_overflow(id_, u);
  return out;
}

double TransformFamily::jacobian(double x, const TransformParams& p) const {
  validate(p);
  check_domain(x, p);
  switch (id_) {
    case TransformId::dp: {
      const double lam = p[0];
      return lam <= eps_lambda_ ? 1.0 / x : std::cosh(lam * std::log(x)) / x;
    }
    case TransformId::sdp: {
      const double lam = p[0];
      const double xc = x + p[1];
      return lam <= eps_lambda_ ? 1.0 / xc : std::cosh(lam * std::log(xc)) / xc;
    }
    case TransformId::ss: {
      // b * sqrt((1 + H(x)^2) / (1 + x^2)), with sqrt(1+H^2) = cosh(b asinh x - a)
      const double t = p[1] * std::asinh(x) - p[0];
      return p[1] * std::cosh(t) / std::sqrt(1.0 + x * x);
    }
    case TransformId::log:
      return 1.0 / x;
    case TransformId::identity:
      return 1.0;
  }
  return 1.0;
}

double TransformFamily::log_jacobian(double x, const TransformParams& p) const {
  validate(p);
  check_domain(x, p);
  switch (id_) {
    case TransformId::dp: {
      const double lam = p[0];
      const double lx = std::log(x);
      return lam <= eps_lambda_ ? -lx : log_cosh(lam * lx) - lx;
    }
    case TransformId::sdp: {
      const double lam = p[0];
      const double lx = std::log(x + p[1]);
      return lam <= eps_lambda_ ? -lx : log_cosh(lam * lx) - lx;
    }
    case TransformId::ss: {
      const double t = p[1] * std::asinh(x) - p[0];
      return std::log(p[1]) + log_cosh(t) - 0.5 * std::log1p(x * x);
    }
    case TransformId::log:
      return -std::log(x);
    case TransformId::identity:
      return 0.0;
  }
  return 0.0;
}

void TransformFamily::forward(std::span<const double> x, const TransformParams& p,
                              std::span<double> out) const {
  validate(p);
  if (out.size() != x.size()) throw internal_error("forward batch: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) {
    check_domain(x[i], p);
  }
  switch (id_) {
    case TransformId::dp:
    case TransformId::sdp: {
      const double lam = p[0];
      const double c = id_ == TransformId::sdp ? p[1] : 0.0;
      if (lam <= eps_lambda_) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::log(x[i] + c);
      } else {
        for (std::size_t i = 0; i < x.size(); ++i) {
          out[i] = std::sinh(lam * std::log(x[i] + c)) / lam;
        }
      }
      return;
    }
    default:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = forward(x[i], p);
  }
}

double TransformFamily::sum_log_jacobian(std::span<const double> x,
                                         const TransformParams& p) const {
  validate(p);
  double s = 0.0;
  for (double xi : x) s += log_jacobian(xi, p);
  return s;
}

double TransformFamily::forward_extended(double z, const TransformParams& p) const {
  validate(p);
  if (!(z > domain_lower(p))) return -kInf;
  if (!std::isfinite(z)) return z > 0 ? kInf : -kInf;
  return forward(z, p);
}

double TransformFamily::fd_step(double value) const {
  static const double cbrt_eps = std::cbrt(std::numeric_limits<double>::epsilon());
  return cbrt_eps * (1.0 + std::abs(value));
}

TransformParams TransformFamily::shifted(const TransformParams& p, std::size_t k,
                                         double delta) const {
  TransformParams q = p;
  q.values[k] += delta;
  return q;
}

Eigen::VectorXd TransformFamily::param_gradient(double x, const TransformParams& p) const {
  validate(p);
  check_domain(x, p);
  const std::size_t q = param_count();
  Eigen::VectorXd g(q);
  for (std::size_t k = 0; k < q; ++k) {
    const double h = fd_step(p[k]);
    const TransformParams lo = shifted(p, k, -h);
    const TransformParams hi = shifted(p, k, +h);
    if (!bounds_[k].contains(lo[k]) || !bounds_[k].contains(hi[k]) ||
        !in_domain(x, lo) || !in_domain(x, hi)) {
      std::ostringstream os;
      os << "param_gradient: parameter " << k << "=" << p[k]
         << " too close to its bound for step " << h;
      throw invalid_input(os.str());
    }
    g[static_cast<Eigen::Index>(k)] = (forward(x, hi) - forward(x, lo)) / (2.0 * h);
  }
  return g;
}

namespace {

// Central second differences of f over a q-dim parameter box.
template <class F>
Eigen::MatrixXd fd_hessian(const F& f, const TransformParams& p,
                           std::span<const ParamBounds> bounds,
                           const std::function<double(double)>& step) {
  const std::size_t q = p.size();
  Eigen::MatrixXd out(q, q);
  const double f0 = f(p);
  auto moved = [&](std::size_t k, double dk, std::size_t l, double dl) {
    TransformParams r = p;
    r.values[k] += dk;
    if (l != k) r.values[l] += dl;
    else r.values[k] += dl;
    return r;
  };
  std::vector<double> h(q);
  for (std::size_t k = 0; k < q; ++k) {
    h[k] = step(p[k]);
    if (!bounds[k].contains(p[k] - h[k]) || !bounds[k].contains(p[k] + h[k])) {
      throw invalid_input("param hessian: parameter too close to its bound");
    }
  }
  for (std::size_t k = 0; k < q; ++k) {
    const double hk = h[k];
    out(k, k) = (f(moved(k, hk, k, 0.0)) - 2.0 * f0 + f(moved(k, -hk, k, 0.0))) / (hk * hk);
    for (std::size_t l = k + 1; l < q; ++l) {
      const double hl = h[l];
      const double v = (f(moved(k, hk, l, hl)) - f(moved(k, hk, l, -hl)) -
                        f(moved(k, -hk, l, hl)) + f(moved(k, -hk, l, -hl))) /
                       (4.0 * hk * hl);
      out(k, l) = v;
      out(l, k) = v;
    }
  }
  return out;
}

}  // namespace

Eigen::VectorXd TransformFamily::log_jacobian_param_gradient(double x,
                                                             const TransformParams& p) const {
  validate(p);
  check_domain(x, p);
  const std::size_t q = param_count();
  Eigen::VectorXd g(q);
  for (std::size_t k = 0; k < q; ++k) {
    const double h = fd_step(p[k]);
    const TransformParams lo = shifted(p, k, -h);
    const TransformParams hi = shifted(p, k, +h);
    if (!bounds_[k].contains(lo[k]) || !bounds_[k].contains(hi[k]) ||
        !in_domain(x, lo) || !in_domain(x, hi)) {
      throw invalid_input("log_jacobian_param_gradient: parameter too close to its bound");
    }
    g[static_cast<Eigen::Index>(k)] =
        (log_jacobian(x, hi) - log_jacobian(x, lo)) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd TransformFamily::param_hessian(double x, const TransformParams& p) const {
  validate(p);
  check_domain(x, p);
  auto f = [&](const TransformParams& q) {
    if (!in_domain(x, q)) throw invalid_input("param hessian: step leaves the domain");
    return forward(x, q);
  };
  return fd_hessian(f, p, bounds_, [this](double v) { return fd_step(v); });
}

Eigen::MatrixXd TransformFamily::log_jacobian_param_hessian(double x,
                                                            const TransformParams& p) const {
  validate(p);
  check_domain(x, p);
  auto f = [&](const TransformParams& q) {
    if (!in_domain(x, q)) throw invalid_input("param hessian: step leaves the domain");
    return log_jacobian(x, q);
  };
  return fd_hessian(f, p, bounds_, [this](double v) { return fd_step(v); });
}

}  // namespace atbp
