#include "feddadil/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace feddadil {

std::vector<double> project_to_simplex(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("cannot project an empty vector onto the simplex");
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("simplex projection needs finite input");
  }
  // Points already on the simplex (to rounding) are fixed points, which makes
  // the projection exactly idempotent.
  if (std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0; }) && on_simplex(v, 1e-12)) {
    return {v.begin(), v.end()};
  }
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - t > 0.0) theta = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

void project_rows_to_simplex(Matrix& rows) {
  std::vector<double> buf(static_cast<std::size_t>(rows.cols()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) buf[j] = rows(i, j);
    const auto p = project_to_simplex(buf);
    for (Eigen::Index j = 0; j < rows.cols(); ++j) rows(i, j) = p[j];
  }
}

bool on_simplex(std::span<const double> v, double tol) {
  double s = 0.0;
  for (double x : v) {
    if (!(x >= -tol)) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= tol;
}

}  // namespace feddadil
