#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "atbp/data.hpp"
#include "atbp/fit.hpp"

namespace atbp {

enum class Scenario { A, B, C, D };
Scenario scenario_from_string(std::string_view name);
std::string_view to_string(Scenario s);

/// Where the poverty-line median is taken from (the study target is
/// z = z_factor * median of the responses).
enum class MedianSource { population, sample };

struct ScenarioSpec {
  Scenario scenario = Scenario::A;
  double lambda = 0.2;  // scenarios A and B only
  int m = 25;           // number of areas; divisible by group_n.size()
  int N = 200;          // units per area
  std::vector<int> group_n{20, 40, 60, 80, 100};
  double beta0 = -1.0;
  double beta1 = 3.0;
  double tau = 0.3;
  double sigma = 0.7;
  double z_factor = 0.6;
  MedianSource median_source = MedianSource::population;
  std::optional<double> fixed_z;  // overrides the median rule
  std::uint64_t seed = 1;

  int sample_size_of_area(int i) const;
  void validate() const;
};

/// A simulated finite population with its full truth.
struct GeneratedPopulation {
  FinitePopulation population;          // sampled responses visible
  std::vector<Eigen::VectorXd> full_y;  // every unit's response
  long overflow_redraws = 0;            // scenario A/B inverse overflows
};

/// Covariates are a function of the spec seed only ("frozen"); replicate
/// noise is keyed by rep_index.
GeneratedPopulation generate_population(const ScenarioSpec& spec, int rep_index);

/// mu_i = (1/N_i) sum_j T(Y_ij) over the full population.
Eigen::VectorXd true_mu(const GeneratedPopulation& gen, const TargetFunction& T);

/// z = z_factor * median of the responses (full population or sample).
double poverty_line(const GeneratedPopulation& gen, const ScenarioSpec& spec);

/// Sample-only mean of T per area.
Eigen::VectorXd direct_estimator(const FinitePopulation& pop, const TargetFunction& T);

enum class Method { ATP, TP, EBP, DE };
std::string_view to_string(Method m);

struct PredictionStudyConfig {
  int R = 200;
  int L = 100;  // Monte-Carlo draws per non-sampled unit
  std::vector<Method> methods{Method::ATP, Method::TP, Method::EBP, Method::DE};
  FitConfig fit;
  unsigned threads = 1;
};

struct IntervalStudyConfig {
  int R = 200;
  double alpha = 0.05;
  int B = 500;
  int L_post = 1000;       // posterior draws for the reported intervals
  int L_post_world = 500;  // posterior draws inside bootstrap worlds
  bool refit = true;
  FitConfig fit;
  unsigned threads = 1;
};

struct StudyReport {
  std::string study;  // "prediction" | "interval"
  std::uint64_t seed = 0;
  int R = 0;
  double runtime_seconds = 0;
  std::vector<std::string> methods;

  // prediction study: group x method RMSE
  std::vector<int> group_sizes;
  Eigen::MatrixXd rmse_by_group;

  // interval study: area x method coverage and average length
  std::vector<std::string> area_ids;
  std::vector<int> area_n;
  Eigen::MatrixXd cp_by_area;
  Eigen::MatrixXd al_by_area;
};

/// Fits every requested method on each replicate, predicts mu, and
/// accumulates group-averaged RMSEs (Table-1 layout).
StudyReport run_prediction_study(const ScenarioSpec& spec,
                                 const PredictionStudyConfig& cfg);

/// Computes naive and bootstrap-calibrated intervals per area on each
/// replicate and accumulates per-area empirical coverage and average length.
StudyReport run_interval_study(const ScenarioSpec& spec, const IntervalStudyConfig& cfg);

}  // namespace atbp
