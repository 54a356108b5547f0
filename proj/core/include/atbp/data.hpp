#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "atbp/error.hpp"
#include "atbp/transform.hpp"

namespace atbp {

/// One area's sampled data on the data scale: n_i responses and covariates.
struct AreaData {
  std::string id;
  Eigen::VectorXd y;  // n_i
  Eigen::MatrixXd X;  // n_i x p

  Eigen::Index n() const { return y.size(); }
};

/// Full parameter vector phi = (beta, tau2, sigma2, transform params).
struct ModelParams {
  Eigen::VectorXd beta;
  double tau2 = 0.0;
  double sigma2 = 1.0;
  TransformParams transform;

  void validate() const {
    if (!(sigma2 > 0.0)) throw invalid_input("sigma2 must be > 0");
    if (!(tau2 >= 0.0)) throw invalid_input("tau2 must be >= 0");
  }
};

/// One area of a finite population: covariates for every unit, responses for
/// the sampled ones.
struct AreaPopulation {
  std::string id;
  Eigen::MatrixXd X;                  // N_i x p, all units
  std::vector<std::uint8_t> sampled;  // N_i flags
  Eigen::VectorXd y;                  // n_i responses, in row order of sampled units
  std::vector<std::string> unit_ids;  // optional, N_i when present

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index sample_size() const { return y.size(); }

  /// Sampled rows as AreaData for model fitting.
  AreaData sample() const;
  void check() const;
};

struct FinitePopulation {
  std::vector<AreaPopulation> areas;

  Eigen::Index p() const { return areas.empty() ? 0 : areas.front().X.cols(); }
  std::size_t area_count() const { return areas.size(); }
  std::vector<AreaData> samples() const;
  void check() const;
};

/// The user-specified T() defining the area parameter mu_i.
struct TargetFunction {
  enum class Kind { identity, indicator, fgt };

  Kind kind = Kind::identity;
  double z = 0.0;      // poverty line (indicator / fgt)
  double alpha = 0.0;  // fgt exponent

  static TargetFunction identity() { return {Kind::identity, 0.0, 0.0}; }
  static TargetFunction indicator(double z) { return {Kind::indicator, z, 0.0}; }
  static TargetFunction fgt(double alpha, double z);

  double operator()(double x) const {
    switch (kind) {
      case Kind::identity:
        return x;
      case Kind::indicator:
        return x < z ? 1.0 : 0.0;
      case Kind::fgt:
        if (!(x < z)) return 0.0;
        return alpha == 0.0 ? 1.0 : std::pow((z - x) / z, alpha);
    }
    return x;
  }

  /// True when T is a 0/1 threshold function of x < z.
  bool is_indicator() const {
    return kind == Kind::indicator || (kind == Kind::fgt && alpha == 0.0);
  }
  /// T bounded in [0,1] (indicator and FGT targets).
  bool is_bounded01() const { return kind != Kind::identity; }
};

}  // namespace atbp
