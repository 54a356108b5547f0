#include "atbp/predict.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "atbp/parallel.hpp"

namespace atbp {

namespace {

constexpr std::uint64_t kPredictTag = rng_tag("pred");

[[noreturn]] void throw_rejection_budget(const char* where, long rejected, long budget) {
  std::ostringstream os;
  os << where << ": " << rejected << " inverse-transform overflows exceed the 1% budget ("
     << budget << ")";
  throw numeric_error(os.str());
}

// Draw T(H^{-1}(theta + sd * normal)) with redraw-on-overflow bookkeeping.
struct OverflowPolicy {
  long budget;
  long rejected = 0;
  const char* where;

  explicit OverflowPolicy(long draws, const char* where_)
      : budget(std::max<long>(1, draws / 100)), where(where_) {}

  void count_rejection() {
    if (++rejected > budget) throw_rejection_budget(where, rejected, budget);
  }
};

}  // namespace

ConditionalLaw conditional_law(const FittedModel& fitted, const FinitePopulation& pop,
                               std::size_t area_index) {
  if (area_index >= pop.areas.size()) throw invalid_input("conditional_law: bad area index");
  const AreaPopulation& area = pop.areas[area_index];
  if (area.X.cols() != fitted.p) {
    throw invalid_input("conditional_law: covariate dimension mismatch with the fit");
  }
  const double tau2 = fitted.params.tau2;
  const double sigma2 = fitted.params.sigma2;
  const double n = static_cast<double>(area.sample_size());
  const double shrink = tau2 / (sigma2 + n * tau2);

  // residual sum over the sampled units on the model scale
  double resid_sum = 0.0;
  {
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < area.size(); ++j) {
      if (!area.sampled[static_cast<std::size_t>(j)]) continue;
      const double h = fitted.family.forward(area.y[r], fitted.params.transform);
      resid_sum += h - area.X.row(j).dot(fitted.params.beta);
      ++r;
    }
  }

  ConditionalLaw law;
  law.sigma = std::sqrt(sigma2);
  law.s = std::sqrt(sigma2 * tau2 / (sigma2 + n * tau2));
  for (Eigen::Index j = 0; j < area.size(); ++j) {
    if (!area.sampled[static_cast<std::size_t>(j)]) law.unit_rows.push_back(j);
  }
  law.theta.resize(static_cast<Eigen::Index>(law.unit_rows.size()));
  for (std::size_t k = 0; k < law.unit_rows.size(); ++k) {
    law.theta[static_cast<Eigen::Index>(k)] =
        area.X.row(law.unit_rows[k]).dot(fitted.params.beta) + shrink * resid_sum;
  }
  return law;
}

namespace {

struct McStats {
  double mean = 0;
  double var_of_mean = 0;
};

McStats mc_stats(const TargetFunction& T, const TransformFamily& family,
                 const TransformParams& tp, double theta, double var, int L, Rng& rng) {
  if (L < 1) throw invalid_input("mc_expectation: L must be >= 1");
  if (!(var >= 0.0)) throw invalid_input("mc_expectation: var must be >= 0");
  if (var == 0.0) return {T(family.inverse(theta, tp)), 0.0};
  const double sd = std::sqrt(var);

  if (T.is_indicator()) {
    // I(H^{-1}(u) < z) == I(u < H(z)) by strict monotonicity; no inverse needed
    const double hz = family.forward_extended(T.z, tp);
    long hits = 0;
    for (int l = 0; l < L; ++l) {
      if (theta + sd * rng.normal() < hz) ++hits;
    }
    const double e = static_cast<double>(hits) / L;
    return {e, e * (1.0 - e) / L};
  }

  OverflowPolicy overflow(L, "mc_expectation");
  double sum = 0.0;
  double sumsq = 0.0;
  for (int l = 0; l < L; ++l) {
    double x;
    while (!family.try_inverse(theta + sd * rng.normal(), tp, x)) {
      overflow.count_rejection();
    }
    const double t = T(x);
    sum += t;
    sumsq += t * t;
  }
  const double mean = sum / L;
  return {mean, std::max(sumsq / L - mean * mean, 0.0) / L};
}

}  // namespace

double mc_expectation(const TargetFunction& T, const TransformFamily& family,
                      const TransformParams& tp, double theta, double var, int L,
                      Rng& rng) {
  family.validate(tp);
  return mc_stats(T, family, tp, theta, var, L, rng).mean;
}

std::vector<AreaPrediction> atbp_predict(const FittedModel& fitted,
                                         const FinitePopulation& pop,
                                         const TargetFunction& T, int L,
                                         std::uint64_t seed, unsigned threads) {
  if (L < 1) throw invalid_input("atbp_predict: L must be >= 1");
  if (pop.p() != fitted.p) {
    throw invalid_input("atbp_predict: population covariate dimension mismatch");
  }
  const bool linear_case = T.kind == TargetFunction::Kind::identity &&
                           fitted.family.id() == TransformId::identity;

  std::vector<AreaPrediction> out(pop.areas.size());
  parallel_for(pop.areas.size(), threads, [&](std::size_t i) {
    const AreaPopulation& area = pop.areas[i];
    Rng rng = Rng::stream(seed, {kPredictTag, static_cast<std::uint64_t>(i)});

    double sum = 0.0;
    for (Eigen::Index r = 0; r < area.sample_size(); ++r) sum += T(area.y[r]);

    const ConditionalLaw law = conditional_law(fitted, pop, i);
    const double var = law.total_var();
    double mc_var_sum = 0.0;
    for (Eigen::Index k = 0; k < law.theta.size(); ++k) {
      if (linear_case) {
        // E[u] = theta exactly; skip the Monte-Carlo noise
        sum += law.theta[k];
        continue;
      }
      const McStats e = mc_stats(T, fitted.family, fitted.params.transform,
                                 law.theta[k], var, L, rng);
      sum += e.mean;
      mc_var_sum += e.var_of_mean;
    }
    const double N = static_cast<double>(area.size());
    out[i] = {area.id, area.sample_size(), area.size(), sum / N,
              std::sqrt(mc_var_sum) / N};
  });
  return out;
}

std::vector<double> posterior_draws(const FittedModel& fitted,
                                    const FinitePopulation& pop, std::size_t area_index,
                                    const TargetFunction& T, int L_post, Rng& rng) {
  if (L_post < 2) throw invalid_input("posterior_draws: L_post must be >= 2");
  const AreaPopulation& area = pop.areas.at(area_index);
  const ConditionalLaw law = conditional_law(fitted, pop, area_index);

  double sampled_part = 0.0;
  for (Eigen::Index r = 0; r < area.sample_size(); ++r) sampled_part += T(area.y[r]);

  const double N = static_cast<double>(area.size());
  const Eigen::Index k = law.theta.size();
  std::vector<double> draws(static_cast<std::size_t>(L_post));

  if (T.is_indicator()) {
    const double hz = fitted.family.forward_extended(T.z, fitted.params.transform);
    for (int l = 0; l < L_post; ++l) {
      const double z = rng.normal();
      long hits = 0;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (law.theta[j] + law.s * z + law.sigma * rng.normal() < hz) ++hits;
      }
      draws[static_cast<std::size_t>(l)] = (sampled_part + hits) / N;
    }
    return draws;
  }

  OverflowPolicy overflow(static_cast<long>(L_post) * std::max<Eigen::Index>(k, 1),
                          "posterior_draws");
  for (int l = 0; l < L_post; ++l) {
    const double z = rng.normal();
    double sum = sampled_part;
    for (Eigen::Index j = 0; j < k; ++j) {
      double x;
      while (!fitted.family.try_inverse(law.theta[j] + law.s * z + law.sigma * rng.normal(),
                                        fitted.params.transform, x)) {
        overflow.count_rejection();
      }
      sum += T(x);
    }
    draws[static_cast<std::size_t>(l)] = sum / N;
  }
  return draws;
}

double quantile_sorted(std::span<const double> sorted, double a) {
  if (sorted.empty()) throw invalid_input("quantile: no draws");
  if (!(a >= 0.0 && a <= 1.0)) throw invalid_input("quantile: a must be in [0, 1]");
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = a * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double quantile(std::vector<double> draws, double a) {
  std::sort(draws.begin(), draws.end());
  return quantile_sorted(draws, a);
}

}  // namespace atbp
