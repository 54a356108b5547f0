#include "atbp/data.hpp"

#include <sstream>

namespace atbp {

TargetFunction TargetFunction::fgt(double alpha, double z) {
  if (!(z > 0.0)) throw invalid_input("fgt target: poverty line z must be > 0");
  if (!(alpha >= 0.0)) throw invalid_input("fgt target: alpha must be >= 0");
  return {Kind::fgt, z, alpha};
}

AreaData AreaPopulation::sample() const {
  AreaData out;
  out.id = id;
  const Eigen::Index n = sample_size();
  out.y = y;
  out.X.resize(n, X.cols());
  Eigen::Index r = 0;
  for (Eigen::Index j = 0; j < size(); ++j) {
    if (sampled[static_cast<std::size_t>(j)]) {
      if (r >= n) throw invalid_input("area " + id + ": more sampled flags than responses");
      out.X.row(r++) = X.row(j);
    }
  }
  if (r != n) {
    std::ostringstream os;
    os << "area " << id << ": " << r << " sampled flags but " << n << " responses";
    throw invalid_input(os.str());
  }
  return out;
}

void AreaPopulation::check() const {
  if (size() == 0) throw invalid_input("area " + id + ": empty");
  if (sampled.size() != static_cast<std::size_t>(size())) {
    throw invalid_input("area " + id + ": sampled flags do not match unit count");
  }
  if (sample_size() < 1 || sample_size() > size()) {
    throw invalid_input("area " + id + ": need 1 <= n_i <= N_i");
  }
  if (!X.allFinite()) throw invalid_input("area " + id + ": non-finite covariate");
  if (!y.allFinite()) throw invalid_input("area " + id + ": non-finite response");
  Eigen::Index flagged = 0;
  for (auto f : sampled) flagged += f ? 1 : 0;
  if (flagged != sample_size()) {
    throw invalid_input("area " + id + ": sampled flag count != response count");
  }
}

std::vector<AreaData> FinitePopulation::samples() const {
  std::vector<AreaData> out;
  out.reserve(areas.size());
  for (const auto& a : areas) out.push_back(a.sample());
  return out;
}

void FinitePopulation::check() const {
  if (areas.empty()) throw invalid_input("population has no areas");
  const Eigen::Index pp = p();
  for (const auto& a : areas) {
    a.check();
    if (a.X.cols() != pp) {
      throw invalid_input("area " + a.id + ": covariate dimension mismatch");
    }
  }
}

}  // namespace atbp
