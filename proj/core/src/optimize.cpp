#include "atbp/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "atbp/error.hpp"

namespace atbp {

namespace {

double checked_eval(const std::function<double(double)>& f, double x, int& evals) {
  const double v = f(x);
  ++evals;
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "golden_section_max: objective non-finite at x=" << x;
    throw numeric_error(os.str());
  }
  return v;
}

constexpr double kBoxMargin = 1e-8;

double clamp_to_box(double v, const ParamBounds& b) {
  const double lo = std::isfinite(b.lo) ? b.lo + kBoxMargin : -std::numeric_limits<double>::max();
  const double hi = std::isfinite(b.hi) ? b.hi - kBoxMargin : std::numeric_limits<double>::max();
  return std::clamp(v, lo, hi);
}

}  // namespace

ScalarMaxResult golden_section_max(const std::function<double(double)>& f, double lo,
                                   double hi, double tol, int max_iter) {
  if (!(lo < hi)) throw invalid_input("golden_section_max: need lo < hi");
  if (!(tol > 0.0)) throw invalid_input("golden_section_max: tol must be > 0");
  // interior points at the golden ratio
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  int evals = 0;
  double a = lo;
  double b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = checked_eval(f, c, evals);
  double fd = checked_eval(f, d, evals);
  for (int it = 0; it < max_iter && (b - a) > tol; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = checked_eval(f, c, evals);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = checked_eval(f, d, evals);
    }
  }
  ScalarMaxResult r;
  r.x = fc > fd ? c : d;
  r.value = std::max(fc, fd);
  r.evaluations = evals;
  r.bracket = b - a;
  return r;
}

SimplexMaxResult nelder_mead_max(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& init,
    double tol, std::span<const ParamBounds> box, int max_iter, double initial_step) {
  const Eigen::Index q = init.size();
  if (q == 0) throw invalid_input("nelder_mead_max: empty parameter vector");
  if (!box.empty() && static_cast<Eigen::Index>(box.size()) != q) {
    throw invalid_input("nelder_mead_max: box dimension mismatch");
  }

  auto clamp = [&](Eigen::VectorXd v) {
    if (!box.empty()) {
      for (Eigen::Index k = 0; k < q; ++k) v[k] = clamp_to_box(v[k], box[k]);
    }
    return v;
  };

  // minimize -f internally
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };

  const int nv = static_cast<int>(q) + 1;
  std::vector<Eigen::VectorXd> vertex(nv);
  std::vector<double> fv(nv);
  vertex[0] = clamp(init);
  for (int i = 1; i < nv; ++i) {
    Eigen::VectorXd v = vertex[0];
    v[i - 1] += initial_step * (1.0 + std::abs(v[i - 1]));
    vertex[i] = clamp(v);
  }
  for (int i = 0; i < nv; ++i) fv[i] = eval(vertex[i]);

  std::vector<int> order(nv);
  auto sort_vertices = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return fv[i] < fv[j]; });
  };

  int it = 0;
  bool converged = false;
  for (; it < max_iter; ++it) {
    sort_vertices();
    const int best = order[0];
    const int worst = order[nv - 1];
    const int second_worst = order[nv - 2];
    if (fv[worst] - fv[best] < tol) {
      converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(q);
    for (int i = 0; i < nv; ++i) {
      if (i != worst) centroid += vertex[i];
    }
    centroid /= static_cast<double>(q);

    const Eigen::VectorXd reflected = clamp(centroid + (centroid - vertex[worst]));
    const double fr = eval(reflected);
    if (fr < fv[order[0]]) {
      const Eigen::VectorXd expanded = clamp(centroid + 2.0 * (centroid - vertex[worst]));
      const double fe = eval(expanded);
      if (fe < fr) {
        vertex[worst] = expanded;
        fv[worst] = fe;
      } else {
        vertex[worst] = reflected;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second_worst]) {
      vertex[worst] = reflected;
      fv[worst] = fr;
      continue;
    }
    const Eigen::VectorXd contracted = clamp(centroid - 0.5 * (centroid - vertex[worst]));
    const double fc = eval(contracted);
    if (fc < fv[worst]) {
      vertex[worst] = contracted;
      fv[worst] = fc;
      continue;
    }
    // shrink towards the best vertex
    for (int i = 0; i < nv; ++i) {
      if (i == best) continue;
      vertex[i] = clamp(vertex[best] + 0.5 * (vertex[i] - vertex[best]));
      fv[i] = eval(vertex[i]);
    }
  }

  sort_vertices();
  SimplexMaxResult r;
  r.x = vertex[order[0]];
  r.value = -fv[order[0]];
  r.iterations = it;
  r.evaluations = evals;
  r.converged = converged;
  return r;
}

}  // namespace atbp
