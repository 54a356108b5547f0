#include "atbp/intervals.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "atbp/parallel.hpp"

namespace atbp {

namespace {

constexpr std::uint64_t kIntervalTag = rng_tag("intv");
constexpr std::uint64_t kBootTag = rng_tag("boot");
constexpr std::uint64_t kBootPostTag = rng_tag("bpost");

IntervalResult interval_from_draws(std::vector<double> draws, const std::string& area_id,
                                   double alpha, double a) {
  std::sort(draws.begin(), draws.end());
  IntervalResult r;
  r.area_id = area_id;
  r.alpha = alpha;
  r.L_post = static_cast<int>(draws.size());
  r.lower = quantile_sorted(draws, a / 2.0);
  r.upper = quantile_sorted(draws, 1.0 - a / 2.0);
  return r;
}

}  // namespace

IntervalResult naive_interval(const FittedModel& fitted, const FinitePopulation& pop,
                              std::size_t area_index, const TargetFunction& T,
                              double alpha, int L_post, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("alpha must be in (0, 1)");
  Rng rng = Rng::stream(seed, {kIntervalTag, static_cast<std::uint64_t>(area_index)});
  auto draws = posterior_draws(fitted, pop, area_index, T, L_post, rng);
  IntervalResult r = interval_from_draws(std::move(draws),
                                         pop.areas[area_index].id, alpha, alpha);
  r.method = IntervalResult::Method::naive;
  return r;
}

namespace {

BootstrapWorld bootstrapworld_impl(const FittedModel& fitted, const FinitePopulation& pop,
                                   const TargetFunction& T, Rng& rng) {
  const double tau = std::sqrt(fitted.params.tau2);
  const double sigma = std::sqrt(fitted.params.sigma2);
  BootstrapWorld world;
  world.population = pop;  // covariates and sampling pattern survive
  world.full_y.resize(pop.areas.size());
  world.mu_star.resize(static_cast<Eigen::Index>(pop.areas.size()));

  for (std::size_t i = 0; i < pop.areas.size(); ++i) {
    const AreaPopulation& src = pop.areas[i];
    AreaPopulation& dst = world.population.areas[i];
    const Eigen::Index N = src.size();
    Eigen::VectorXd y_full(N);
    const double v = tau * rng.normal();
    const long budget = std::max<long>(1, N / 100);
    long rejected = 0;
    double t_sum = 0.0;
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < N; ++j) {
      const double mean = src.X.row(j).dot(fitted.params.beta) + v;
      double value;
      while (!fitted.family.try_inverse(mean + sigma * rng.normal(),
                                        fitted.params.transform, value)) {
        if (++rejected > budget) {
          throw numeric_error("bootstrap_world: inverse overflows exceed the 1% budget");
        }
      }
      y_full[j] = value;
      t_sum += T(value);
      if (src.sampled[static_cast<std::size_t>(j)]) dst.y[r++] = value;
    }
    world.full_y[i] = std::move(y_full);
    world.mu_star[static_cast<Eigen::Index>(i)] = t_sum / static_cast<double>(N);
  }
  return world;
}

}  // namespace

BootstrapWorld bootstrap_world(const FittedModel& fitted, const FinitePopulation& pop,
                               const TargetFunction& T, Rng& rng) {
  return bootstrapworld_impl(fitted, pop, T, rng);
}

BootstrapEnsemble build_bootstrap_ensemble(const FittedModel& fitted,
                                           const FinitePopulation& pop,
                                           const TargetFunction& T, int B, int L_post,
                                           bool refit, const FitConfig& fit_cfg,
                                           std::uint64_t seed, unsigned threads,
                                           std::span<const std::size_t> areas) {
  if (B < 1) throw invalid_input("bootstrap ensemble: B must be >= 1");
  BootstrapEnsemble ens;
  ens.B = B;
  if (areas.empty()) {
    ens.area_indices.resize(pop.areas.size());
    std::iota(ens.area_indices.begin(), ens.area_indices.end(), 0);
  } else {
    ens.area_indices.assign(areas.begin(), areas.end());
  }
  const std::size_t na = ens.area_indices.size();
  ens.draws.assign(static_cast<std::size_t>(B), {});
  ens.mu_star.assign(static_cast<std::size_t>(B), {});
  std::vector<std::uint8_t> ok(static_cast<std::size_t>(B), 0);
  std::vector<std::string> reasons(static_cast<std::size_t>(B));

  parallel_for(static_cast<std::size_t>(B), threads, [&](std::size_t b) {
    Rng gen_rng = Rng::stream(seed, {kBootTag, static_cast<std::uint64_t>(b)});
    try {
      const BootstrapWorld world = bootstrapworld_impl(fitted, pop, T, gen_rng);
      FittedModel world_fit = fitted;  // plug-in parameters by default
      if (refit) {
        const auto samples = world.population.samples();
        world_fit = fit_model(samples, fitted.family, fit_cfg);
      }
      auto& world_draws = ens.draws[b];
      world_draws.resize(na);
      Eigen::VectorXd mu(static_cast<Eigen::Index>(na));
      for (std::size_t k = 0; k < na; ++k) {
        const std::size_t area = ens.area_indices[k];
        Rng draw_rng = Rng::stream(
            seed, {kBootPostTag, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(area)});
        world_draws[k] =
            posterior_draws(world_fit, world.population, area, T, L_post, draw_rng);
        std::sort(world_draws[k].begin(), world_draws[k].end());
        mu[static_cast<Eigen::Index>(k)] = world.mu_star[static_cast<Eigen::Index>(area)];
      }
      ens.mu_star[b] = std::move(mu);
      ok[b] = 1;
    } catch (const std::exception& e) {
      reasons[b] = e.what();
    }
  });

  // compact out the dropped worlds, preserving order
  BootstrapEnsemble out;
  out.B = B;
  out.area_indices = ens.area_indices;
  for (std::size_t b = 0; b < static_cast<std::size_t>(B); ++b) {
    if (ok[b]) {
      out.draws.push_back(std::move(ens.draws[b]));
      out.mu_star.push_back(std::move(ens.mu_star[b]));
    } else {
      ++out.dropped;
      if (out.first_drop_reason.empty()) out.first_drop_reason = reasons[b];
    }
  }
  if (out.dropped * 10 > B) {
    std::ostringstream os;
    os << "bootstrap ensemble: " << out.dropped << " of " << B
       << " worlds dropped (first: " << out.first_drop_reason << ")";
    throw numeric_error(os.str());
  }
  return out;
}

double cp_from_ensemble(const BootstrapEnsemble& ensemble, std::size_t area_pos,
                        double a) {
  if (area_pos >= ensemble.area_indices.size()) {
    throw invalid_input("cp_from_ensemble: bad area position");
  }
  if (ensemble.draws.empty()) throw numeric_error("cp_from_ensemble: no usable worlds");
  long covered = 0;
  for (std::size_t b = 0; b < ensemble.draws.size(); ++b) {
    const auto& d = ensemble.draws[b][area_pos];
    const double mu = ensemble.mu_star[b][static_cast<Eigen::Index>(area_pos)];
    const double lo = quantile_sorted(d, a / 2.0);
    const double hi = quantile_sorted(d, 1.0 - a / 2.0);
    if (lo <= mu && mu <= hi) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(ensemble.draws.size());
}

double coverage_estimate(const FittedModel& fitted, const FinitePopulation& pop,
                         std::size_t area_index, const TargetFunction& T, double a,
                         int B, int L_post, bool refit, const FitConfig& fit_cfg,
                         std::uint64_t seed, unsigned threads) {
  if (!(a > 0.0 && a < 1.0)) throw invalid_input("coverage_estimate: a must be in (0, 1)");
  const std::size_t areas[] = {area_index};
  const BootstrapEnsemble ens = build_bootstrap_ensemble(fitted, pop, T, B, L_post,
                                                         refit, fit_cfg, seed, threads,
                                                         areas);
  return cp_from_ensemble(ens, 0, a);
}

CalibratedLevel calibrate_on_cp(const std::function<double(double)>& cp, double alpha,
                                double cp_tol, double bracket_tol) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("calibrate: alpha in (0, 1)");
  const double target = 1.0 - alpha;
  double lo = alpha / 10.0;
  double hi = std::min(10.0 * alpha, 0.5);
  CalibratedLevel r;

  const double cp_lo = cp(lo);
  if (cp_lo < target) {  // even the widest interval cannot reach the target
    r.a_star = lo;
    r.cp_at_a_star = cp_lo;
    r.flagged = true;
    return r;
  }
  const double cp_hi = cp(hi);
  if (cp_hi > target) {  // over-covering even at the narrowest level
    r.a_star = hi;
    r.cp_at_a_star = cp_hi;
    r.flagged = true;
    return r;
  }

  double mid = 0.5 * (lo + hi);
  double cp_mid = cp(mid);
  while (hi - lo > bracket_tol && std::abs(cp_mid - target) > cp_tol) {
    if (cp_mid > target) {
      lo = mid;  // CP non-increasing in a: move towards larger a
    } else {
      hi = mid;
    }
    mid = 0.5 * (lo + hi);
    cp_mid = cp(mid);
    ++r.iterations;
  }
  r.a_star = mid;
  r.cp_at_a_star = cp_mid;
  return r;
}

CalibratedLevel calibrate_level(const FittedModel& fitted, const FinitePopulation& pop,
                                std::size_t area_index, const TargetFunction& T,
                                double alpha, int B, int L_post, bool refit,
                                const FitConfig& fit_cfg, std::uint64_t seed,
                                unsigned threads) {
  const std::size_t areas[] = {area_index};
  const BootstrapEnsemble ens = build_bootstrap_ensemble(fitted, pop, T, B, L_post,
                                                         refit, fit_cfg, seed, threads,
                                                         areas);
  auto cp = [&](double a) { return cp_from_ensemble(ens, 0, a); };
  return calibrate_on_cp(cp, alpha, 1.0 / static_cast<double>(B));
}

IntervalResult calibrated_interval(const FittedModel& fitted, const FinitePopulation& pop,
                                   std::size_t area_index, const TargetFunction& T,
                                   double alpha, int B, int L_post, int L_post_world,
                                   bool refit, const FitConfig& fit_cfg,
                                   std::uint64_t seed, unsigned threads) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("alpha must be in (0, 1)");
  const CalibratedLevel level = calibrate_level(fitted, pop, area_index, T, alpha, B,
                                                L_post_world, refit, fit_cfg, seed,
                                                threads);
  Rng rng = Rng::stream(seed, {kIntervalTag, static_cast<std::uint64_t>(area_index)});
  auto draws = posterior_draws(fitted, pop, area_index, T, L_post, rng);
  IntervalResult r = interval_from_draws(std::move(draws), pop.areas[area_index].id,
                                         alpha, level.a_star);
  r.method = IntervalResult::Method::calibrated;
  r.a_star = level.a_star;
  r.B = B;
  r.flagged = level.flagged;
  return r;
}

}  // namespace atbp
