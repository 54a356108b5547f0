#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atbp/error.hpp"

namespace atbp {

enum class TransformId { dp, sdp, ss, log, identity };

TransformId transform_id_from_string(std::string_view name);
std::string_view to_string(TransformId id);

/// Open interval; +-inf endpoints mean unbounded.
struct ParamBounds {
  double lo;
  double hi;
  bool contains(double v) const { return v > lo && v < hi; }
};

/// Transformation parameters. Layout by family:
///   dp: (lambda);  sdp: (lambda, offset);  ss: (a, b);  log/identity: ().
struct TransformParams {
  std::vector<double> values;

  TransformParams() = default;
  explicit TransformParams(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

/// A parametric, strictly increasing map from the data scale onto the whole
/// real line, with inverse and Jacobian. Families:
///
///   dp        (x^l - x^-l) / 2l on x > 0, l > 0; log branch below eps_lambda
///   sdp       dp applied to x + c (offset c a second parameter)
///   ss        sinh(b asinh(x) - a) on all of R, b > 0
///   log       log x on x > 0
///   identity  x
///
/// Derivatives with respect to the transformation parameters are central
/// finite differences; closed forms exist but are only used as test oracles.
class TransformFamily {
 public:
  static constexpr double kDefaultEpsLambda = 1e-5;

  static TransformFamily make(TransformId id, double eps_lambda = kDefaultEpsLambda);
  static TransformFamily make(std::string_view name, double eps_lambda = kDefaultEpsLambda);

  TransformId id() const { return id_; }
  std::size_t param_count() const;
  /// Admissible open box for the parameters (dp: l in (0, inf), ...).
  std::span<const ParamBounds> param_bounds() const { return bounds_; }
  double eps_lambda() const { return eps_lambda_; }

  /// Throws invalid_input unless p has the right arity and lies strictly
  /// inside the admissible box.
  void validate(const TransformParams& p) const;

  /// Lower edge of the data-scale domain (open): dp/log 0, sdp -offset,
  /// ss/identity -inf.
  double domain_lower(const TransformParams& p) const;
  bool in_domain(double x, const TransformParams& p) const;

  double forward(double x, const TransformParams& p) const;
  /// Inverse map; throws numeric_error when the closed form overflows
  /// (never silently returns a non-finite value).
  double inverse(double u, const TransformParams& p) const;
  /// Overflow-signalling inverse for sampling loops; false means overflow.
  bool try_inverse(double u, const TransformParams& p, double& out) const noexcept;
  double jacobian(double x, const TransformParams& p) const;
  double log_jacobian(double x, const TransformParams& p) const;

  void forward(std::span<const double> x, const TransformParams& p,
               std::span<double> out) const;
  double sum_log_jacobian(std::span<const double> x, const TransformParams& p) const;

  /// H(z) extended to all real z: -inf below the domain, +inf above. For a
  /// strictly increasing H this makes I(H^-1(u) < z) == I(u < forward_extended(z)).
  double forward_extended(double z, const TransformParams& p) const;

  /// Central-difference dH/dparams at x; step (machine eps)^(1/3) * (1+|param|).
  /// Throws invalid_input when a parameter sits too close to its bound for the
  /// step to stay admissible. Zero-length for parameter-free families.
  Eigen::VectorXd param_gradient(double x, const TransformParams& p) const;
  /// Central-difference d2H/dparams2 (q x q, symmetric).
  Eigen::MatrixXd param_hessian(double x, const TransformParams& p) const;
  /// Central-difference d log H'(x) / dparams.
  Eigen::VectorXd log_jacobian_param_gradient(double x, const TransformParams& p) const;
  /// Central-difference d2 log H'(x) / dparams2 (q x q, symmetric).
  Eigen::MatrixXd log_jacobian_param_hessian(double x, const TransformParams& p) const;

 private:
  TransformFamily(TransformId id, double eps_lambda, std::vector<ParamBounds> bounds)
      : id_(id), eps_lambda_(eps_lambda), bounds_(std::move(bounds)) {}

  void check_domain(double x, const TransformParams& p) const;
  TransformParams shifted(const TransformParams& p, std::size_t k, double delta) const;
  double fd_step(double value) const;

  TransformId id_;
  double eps_lambda_;
  std::vector<ParamBounds> bounds_;
};

}  // namespace atbp
