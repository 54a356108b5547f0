#include "atbp/simlab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "atbp/intervals.hpp"
#include "atbp/parallel.hpp"
#include "atbp/predict.hpp"
#include "atbp/rng.hpp"

namespace atbp {

namespace {

constexpr std::uint64_t kCovariateTag = rng_tag("covx");
constexpr std::uint64_t kRepTag = rng_tag("rep");
constexpr std::uint64_t kPredSeedTag = rng_tag("prds");
constexpr std::uint64_t kIntvSeedTag = rng_tag("invs");

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
  return Rng::stream(master, {tag, index}).next();
}

}  // namespace

Scenario scenario_from_string(std::string_view name) {
  if (name == "A" || name == "a") return Scenario::A;
  if (name == "B" || name == "b") return Scenario::B;
  if (name == "C" || name == "c") return Scenario::C;
  if (name == "D" || name == "d") return Scenario::D;
  throw invalid_input("unknown scenario '" + std::string(name) + "' (expected A|B|C|D)");
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::A: return "A";
    case Scenario::B: return "B";
    case Scenario::C: return "C";
    case Scenario::D: return "D";
  }
  return "?";
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::ATP: return "ATP";
    case Method::TP: return "TP";
    case Method::EBP: return "EBP";
    case Method::DE: return "DE";
  }
  return "?";
}

int ScenarioSpec::sample_size_of_area(int i) const {
  const int per_group = m / static_cast<int>(group_n.size());
  return group_n[static_cast<std::size_t>(i / per_group)];
}

void ScenarioSpec::validate() const {
  if (m < 1 || N < 1) throw invalid_input("scenario: m and N must be >= 1");
  if (group_n.empty() || m % static_cast<int>(group_n.size()) != 0) {
    throw invalid_input("scenario: m must be divisible by the number of sample-size groups");
  }
  for (int n : group_n) {
    if (n < 1 || n > N) throw invalid_input("scenario: need 1 <= n_i <= N");
  }
  if ((scenario == Scenario::A || scenario == Scenario::B) && lambda < 0.0) {
    throw invalid_input("scenario A/B: lambda must be >= 0");
  }
  if (!(tau > 0.0) || !(sigma > 0.0)) throw invalid_input("scenario: tau, sigma > 0");
  if (!(z_factor > 0.0)) throw invalid_input("scenario: z_factor must be > 0");
}

namespace {

// Inverse of the data-generating transformation in scenarios A and B
// (lambda = 0 means the log model).
bool ab_inverse(double lambda, double u, double& y) {
  constexpr double kMaxExpArg = 709.0;
  const double t = lambda <= 0.0 ? u : std::asinh(lambda * u) / lambda;
  if (t > kMaxExpArg) return false;
  y = std::exp(t);
  return true;
}

}  // namespace

GeneratedPopulation generate_population(const ScenarioSpec& spec, int rep_index) {
  spec.validate();
  GeneratedPopulation gen;
  gen.population.areas.resize(static_cast<std::size_t>(spec.m));
  gen.full_y.resize(static_cast<std::size_t>(spec.m));

  // covariates: fixed across replicates (function of the spec seed only)
  Rng cov_rng = Rng::stream(spec.seed, {kCovariateTag});
  Rng rep_rng = Rng::stream(spec.seed, {kRepTag, static_cast<std::uint64_t>(rep_index)});

  const long overflow_budget = std::max<long>(1, static_cast<long>(spec.m) * spec.N / 10);

  for (int i = 0; i < spec.m; ++i) {
    AreaPopulation& area = gen.population.areas[static_cast<std::size_t>(i)];
    area.id = "area" + std::to_string(i + 1);
    const int n = spec.sample_size_of_area(i);
    area.X.resize(spec.N, 2);
    for (int j = 0; j < spec.N; ++j) {
      area.X(j, 0) = 1.0;
      area.X(j, 1) = cov_rng.uniform(1.0, 2.0);
    }
    area.sampled.assign(static_cast<std::size_t>(spec.N), 0);
    for (int j = 0; j < n; ++j) area.sampled[static_cast<std::size_t>(j)] = 1;

    Eigen::VectorXd y_full(spec.N);
    double v = 0.0;
    switch (spec.scenario) {
      case Scenario::A:
      case Scenario::D:
        v = spec.tau * rep_rng.normal();
        break;
      case Scenario::B:
        v = spec.tau * rep_rng.student_t(5.0);
        break;
      case Scenario::C: {
        const double shape = 1.0 / (spec.tau * spec.tau);
        v = rep_rng.gamma(shape, 1.0 / shape);  // unit mean
        break;
      }
    }
    for (int j = 0; j < spec.N; ++j) {
      const double xb = spec.beta0 + spec.beta1 * area.X(j, 1);
      double y = 0.0;
      switch (spec.scenario) {
        case Scenario::A: {
          double eps = spec.sigma * rep_rng.normal();
          while (!ab_inverse(spec.lambda, xb + v + eps, y)) {
            if (++gen.overflow_redraws > overflow_budget) {
              throw numeric_error("scenario A: overflow redraws out of control");
            }
            eps = spec.sigma * rep_rng.normal();
          }
          break;
        }
        case Scenario::B: {
          double eps = spec.sigma * rep_rng.student_t(5.0);
          while (!ab_inverse(spec.lambda, xb + v + eps, y)) {
            if (++gen.overflow_redraws > overflow_budget) {
              throw numeric_error("scenario B: overflow redraws out of control");
            }
            eps = spec.sigma * rep_rng.student_t(5.0);
          }
          break;
        }
        case Scenario::C: {
          const double shape = 1.0 / (spec.sigma * spec.sigma);
          const double eps = rep_rng.gamma(shape, 1.0 / shape);
          y = std::exp(xb) * v * eps;
          break;
        }
        case Scenario::D: {
          const double u = xb + v + spec.sigma * rep_rng.normal();
          y = 0.2 * std::exp(u) + 0.8 * u * u;
          break;
        }
      }
      y_full[j] = y;
    }
    area.y = y_full.head(n);
    area.unit_ids.clear();
    gen.full_y[static_cast<std::size_t>(i)] = std::move(y_full);
  }
  return gen;
}

Eigen::VectorXd true_mu(const GeneratedPopulation& gen, const TargetFunction& T) {
  const std::size_t m = gen.full_y.size();
  Eigen::VectorXd mu(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < gen.full_y[i].size(); ++j) s += T(gen.full_y[i][j]);
    mu[static_cast<Eigen::Index>(i)] = s / static_cast<double>(gen.full_y[i].size());
  }
  return mu;
}

double poverty_line(const GeneratedPopulation& gen, const ScenarioSpec& spec) {
  if (spec.fixed_z) return *spec.fixed_z;
  std::vector<double> values;
  if (spec.median_source == MedianSource::population) {
    for (const auto& y : gen.full_y) {
      values.insert(values.end(), y.data(), y.data() + y.size());
    }
  } else {
    for (const auto& area : gen.population.areas) {
      values.insert(values.end(), area.y.data(), area.y.data() + area.y.size());
    }
  }
  const std::size_t n = values.size();
  auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  double median = *mid;
  if (n % 2 == 0) {
    const double below = *std::max_element(values.begin(), mid);
    median = 0.5 * (median + below);
  }
  return spec.z_factor * median;
}

Eigen::VectorXd direct_estimator(const FinitePopulation& pop, const TargetFunction& T) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(pop.areas.size()));
  for (std::size_t i = 0; i < pop.areas.size(); ++i) {
    const auto& y = pop.areas[i].y;
    double s = 0.0;
    for (Eigen::Index j = 0; j < y.size(); ++j) s += T(y[j]);
    out[static_cast<Eigen::Index>(i)] = s / static_cast<double>(y.size());
  }
  return out;
}

namespace {

FittedModel fit_method(Method method, const std::vector<AreaData>& samples,
                       const FitConfig& cfg) {
  switch (method) {
    case Method::ATP:
      return fit_model(samples, TransformFamily::make(TransformId::dp), cfg);
    case Method::TP:
      return fit_model(samples, TransformFamily::make(TransformId::log), cfg);
    case Method::EBP:
      return fit_model(samples, TransformFamily::make(TransformId::identity), cfg);
    case Method::DE:
      throw internal_error("DE has no model fit");
  }
  throw internal_error("unknown method");
}

}  // namespace

StudyReport run_prediction_study(const ScenarioSpec& spec,
                                 const PredictionStudyConfig& cfg) {
  spec.validate();
  if (cfg.R < 1) throw invalid_input("prediction study: R must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t nm = cfg.methods.size();
  const std::size_t m = static_cast<std::size_t>(spec.m);

  // per replicate, per method, per area: squared errors
  std::vector<Eigen::MatrixXd> sqerr(static_cast<std::size_t>(cfg.R));

  parallel_for(static_cast<std::size_t>(cfg.R), cfg.threads, [&](std::size_t r) {
    const GeneratedPopulation gen = generate_population(spec, static_cast<int>(r));
    const TargetFunction T = TargetFunction::indicator(poverty_line(gen, spec));
    const Eigen::VectorXd truth = true_mu(gen, T);
    const auto samples = gen.population.samples();

    Eigen::MatrixXd err(m, nm);
    for (std::size_t k = 0; k < nm; ++k) {
      Eigen::VectorXd mu_hat(static_cast<Eigen::Index>(m));
      if (cfg.methods[k] == Method::DE) {
        mu_hat = direct_estimator(gen.population, T);
      } else {
        const FittedModel fit = fit_method(cfg.methods[k], samples, cfg.fit);
        const auto pred =
            atbp_predict(fit, gen.population, T, cfg.L,
                         derive_seed(spec.seed, kPredSeedTag,
                                     (static_cast<std::uint64_t>(r) << 8) | k));
        for (std::size_t i = 0; i < m; ++i) {
          mu_hat[static_cast<Eigen::Index>(i)] = pred[i].mu_hat;
        }
      }
      for (std::size_t i = 0; i < m; ++i) {
        const double d = mu_hat[static_cast<Eigen::Index>(i)] -
                         truth[static_cast<Eigen::Index>(i)];
        err(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = d * d;
      }
    }
    sqerr[r] = std::move(err);
  });

  // deterministic reduction in replicate order
  Eigen::MatrixXd mse = Eigen::MatrixXd::Zero(m, nm);
  for (const auto& err : sqerr) mse += err;
  mse /= static_cast<double>(cfg.R);
  const Eigen::MatrixXd rmse = mse.cwiseSqrt();

  StudyReport report;
  report.study = "prediction";
  report.seed = spec.seed;
  report.R = cfg.R;
  for (Method method : cfg.methods) report.methods.emplace_back(to_string(method));
  report.group_sizes = spec.group_n;
  const int per_group = spec.m / static_cast<int>(spec.group_n.size());
  report.rmse_by_group =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.group_n.size()), nm);
  for (std::size_t i = 0; i < m; ++i) {
    report.rmse_by_group.row(static_cast<Eigen::Index>(i) / per_group) += rmse.row(i);
  }
  report.rmse_by_group /= static_cast<double>(per_group);
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

StudyReport run_interval_study(const ScenarioSpec& spec, const IntervalStudyConfig& cfg) {
  spec.validate();
  if (cfg.R < 1) throw invalid_input("interval study: R must be >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    throw invalid_input("interval study: alpha must be in (0, 1)");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t m = static_cast<std::size_t>(spec.m);

  // per replicate: covered flag and length, per area, for NCI then BCI
  std::vector<Eigen::MatrixXd> covered(static_cast<std::size_t>(cfg.R));
  std::vector<Eigen::MatrixXd> length(static_cast<std::size_t>(cfg.R));

  parallel_for(static_cast<std::size_t>(cfg.R), cfg.threads, [&](std::size_t r) {
    const GeneratedPopulation gen = generate_population(spec, static_cast<int>(r));
    const TargetFunction T = TargetFunction::indicator(poverty_line(gen, spec));
    const Eigen::VectorXd truth = true_mu(gen, T);
    const auto samples = gen.population.samples();
    const FittedModel fit =
        fit_model(samples, TransformFamily::make(TransformId::dp), cfg.fit);

    const std::uint64_t rep_seed = derive_seed(spec.seed, kIntvSeedTag, r);
    const BootstrapEnsemble ensemble =
        build_bootstrap_ensemble(fit, gen.population, T, cfg.B, cfg.L_post_world,
                                 cfg.refit, cfg.fit, rep_seed);

    Eigen::MatrixXd cov(m, 2);
    Eigen::MatrixXd len(m, 2);
    for (std::size_t i = 0; i < m; ++i) {
      // one set of posterior draws per area; NCI and BCI share it by design
      Rng rng = Rng::stream(rep_seed, {rng_tag("intv"), static_cast<std::uint64_t>(i)});
      auto draws = posterior_draws(fit, gen.population, i, T, cfg.L_post, rng);
      std::sort(draws.begin(), draws.end());

      const double mu = truth[static_cast<Eigen::Index>(i)];
      const double n_lo = quantile_sorted(draws, cfg.alpha / 2.0);
      const double n_hi = quantile_sorted(draws, 1.0 - cfg.alpha / 2.0);
      cov(static_cast<Eigen::Index>(i), 0) = (n_lo <= mu && mu <= n_hi) ? 1.0 : 0.0;
      len(static_cast<Eigen::Index>(i), 0) = n_hi - n_lo;

      auto cp = [&](double a) { return cp_from_ensemble(ensemble, i, a); };
      const CalibratedLevel level =
          calibrate_on_cp(cp, cfg.alpha, 1.0 / static_cast<double>(cfg.B));
      const double c_lo = quantile_sorted(draws, level.a_star / 2.0);
      const double c_hi = quantile_sorted(draws, 1.0 - level.a_star / 2.0);
      cov(static_cast<Eigen::Index>(i), 1) = (c_lo <= mu && mu <= c_hi) ? 1.0 : 0.0;
      len(static_cast<Eigen::Index>(i), 1) = c_hi - c_lo;
    }
    covered[r] = std::move(cov);
    length[r] = std::move(len);
  });

  Eigen::MatrixXd cp_sum = Eigen::MatrixXd::Zero(m, 2);
  Eigen::MatrixXd al_sum = Eigen::MatrixXd::Zero(m, 2);
  for (int r = 0; r < cfg.R; ++r) {
    cp_sum += covered[static_cast<std::size_t>(r)];
    al_sum += length[static_cast<std::size_t>(r)];
  }

  StudyReport report;
  report.study = "interval";
  report.seed = spec.seed;
  report.R = cfg.R;
  report.methods = {"NCI", "BCI"};
  report.cp_by_area = cp_sum / static_cast<double>(cfg.R);
  report.al_by_area = al_sum / static_cast<double>(cfg.R);
  for (int i = 0; i < spec.m; ++i) {
    report.area_ids.push_back("area" + std::to_string(i + 1));
    report.area_n.push_back(spec.sample_size_of_area(i));
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace atbp
