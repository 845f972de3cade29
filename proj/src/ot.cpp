#include "feddadil/ot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace feddadil {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool on_simplex_rows(const Matrix& rows, double tol) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if ((rows.row(i).array() < -tol).any()) return false;
    if (std::abs(rows.row(i).sum() - 1.0) > tol) return false;
  }
  return true;
}

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  // Direct pairwise evaluation keeps C(i,j) == 0 exactly for identical rows.
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      out(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    }
  }
  return out;
}

OtResult trivial_plan(const CostMatrix& cost) {
  const auto n = cost.entries.rows();
  const auto m = cost.entries.cols();
  OtResult res;
  res.plan.coupling = Matrix::Constant(n, m, 1.0 / static_cast<double>(n * m));
  res.cost = (res.plan.coupling.array() * cost.entries.array()).sum();
  return res;
}

void check_cost(const CostMatrix& cost) {
  require(cost.entries.rows() >= 1 && cost.entries.cols() >= 1, "cost matrix must be non-empty");
  require(cost.entries.allFinite(), "cost matrix has non-finite entries");
}

// Hungarian method with row/column potentials, O(n^3).
std::vector<int> solve_assignment(const Matrix& c) {
  const int n = static_cast<int>(c.rows());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      const double* row = c.data() + static_cast<std::ptrdiff_t>(i0 - 1) * n;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n);
  for (int j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Successive shortest paths on the bipartite transportation network with
// integer supplies. Potentials keep reduced costs non-negative.
Matrix solve_transportation(const Matrix& c) {
  const int n = static_cast<int>(c.rows());
  const int m = static_cast<int>(c.cols());
  const std::int64_t g = std::gcd(n, m);
  std::vector<std::int64_t> supply(n, m / g), demand(m, n / g);
  std::vector<std::int64_t> flow(static_cast<std::size_t>(n) * m, 0);
  auto at = [m](int i, int j) { return static_cast<std::size_t>(i) * m + j; };

  std::vector<double> pot(n + m, 0.0);
  for (int j = 0; j < m; ++j) pot[n + j] = c.col(j).minCoeff();

  const int nodes = n + m;
  std::vector<double> dist(nodes);
  std::vector<int> prev(nodes);
  std::vector<char> done(nodes);

  int source = 0;
  while (true) {
    while (source < n && supply[source] == 0) ++source;
    if (source == n) break;

    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    dist[source] = 0.0;
    int sink = -1;
    while (true) {
      int u = -1;
      double best = kInf;
      for (int k = 0; k < nodes; ++k) {
        if (!done[k] && dist[k] < best) {
          best = dist[k];
          u = k;
        }
      }
      if (u < 0) break;
      done[u] = 1;
      if (u >= n && demand[u - n] > 0) {
        sink = u;
        break;
      }
      if (u < n) {
        for (int j = 0; j < m; ++j) {
          const int v = n + j;
          if (done[v]) continue;
          const double rc = std::max(0.0, c(u, j) + pot[u] - pot[v]);
          if (dist[u] + rc < dist[v]) {
            dist[v] = dist[u] + rc;
            prev[v] = u;
          }
        }
      } else {
        const int j = u - n;
        for (int i = 0; i < n; ++i) {
          if (done[i] || flow[at(i, j)] == 0) continue;
          const double rc = std::max(0.0, -c(i, j) + pot[u] - pot[i]);
          if (dist[u] + rc < dist[i]) {
            dist[i] = dist[u] + rc;
            prev[i] = u;
          }
        }
      }
    }
    if (sink < 0) throw std::runtime_error("transportation solver: no augmenting path");

    const double reach = dist[sink];
    for (int k = 0; k < nodes; ++k) pot[k] += std::min(dist[k], reach);

    std::int64_t delta = std::min(supply[source], demand[sink - n]);
    for (int v = sink; v != source; v = prev[v]) {
      const int u = prev[v];
      if (u >= n) delta = std::min(delta, flow[at(v, u - n)]);  // backward arc col -> row
    }
    for (int v = sink; v != source; v = prev[v]) {
      const int u = prev[v];
      if (u < n) {
        flow[at(u, v - n)] += delta;
      } else {
        flow[at(v, u - n)] -= delta;
      }
    }
    supply[source] -= delta;
    demand[sink - n] -= delta;
  }

  const double total = static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(g);
  Matrix plan(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) plan(i, j) = static_cast<double>(flow[at(i, j)]) / total;
  }
  return plan;
}

double log_sum_exp(const double* vals, Eigen::Index count, Eigen::Index stride) {
  double mx = -kInf;
  for (Eigen::Index k = 0; k < count; ++k) mx = std::max(mx, vals[k * stride]);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < count; ++k) acc += std::exp(vals[k * stride] - mx);
  return mx + std::log(acc);
}

// Projects an approximate coupling onto the transport polytope with exact marginals.
void round_to_polytope(Matrix& plan) {
  const auto n = plan.rows();
  const auto m = plan.cols();
  const double a = 1.0 / static_cast<double>(n);
  const double b = 1.0 / static_cast<double>(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = plan.row(i).sum();
    if (r > a) plan.row(i) *= a / r;
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    const double s = plan.col(j).sum();
    if (s > b) plan.col(j) *= b / s;
  }
  Vector err_r = Vector::Constant(n, a) - plan.rowwise().sum();
  Vector err_c = Vector::Constant(m, b) - plan.colwise().sum().transpose();
  err_r = err_r.cwiseMax(0.0);
  err_c = err_c.cwiseMax(0.0);
  const double mass = err_r.sum();
  if (mass > 0.0) plan += (err_r * err_c.transpose()) / mass;
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(Matrix support, std::optional<Matrix> labels)
    : support_(std::move(support)), labels_(std::move(labels)) {
  require(support_.rows() >= 1 && support_.cols() >= 1, "distribution needs n >= 1 and d >= 1");
  require(support_.allFinite(), "distribution support has non-finite entries");
  if (labels_) {
    require(labels_->rows() == support_.rows(), "label rows must match support rows");
    require(labels_->cols() >= 1, "labels need at least one class");
    require(on_simplex_rows(*labels_, 1e-6), "label rows must lie on the probability simplex");
  }
}

CostMatrix cost_matrix(const DiscreteDistribution& p, const DiscreteDistribution& q,
                       const GroundCost& ground) {
  require(p.dim() == q.dim(), "feature dimension mismatch: " + std::to_string(p.dim()) + " vs " +
                                  std::to_string(q.dim()));
  CostMatrix out;
  out.kind = ground.kind;
  out.entries = squared_distances(p.support(), q.support());
  if (ground.kind == CostKind::FeaturesAndLabels) {
    require(p.labeled() && q.labeled(), "labeled cost requires labels on both distributions");
    require(p.num_classes() == q.num_classes(), "class count mismatch");
    const double beta = ground.beta ? *ground.beta : out.entries.mean();
    require(beta >= 0.0 && std::isfinite(beta), "label weight must be finite and non-negative");
    out.beta = beta;
    if (beta > 0.0) out.entries += beta * squared_distances(*p.labels(), *q.labels());
  }
  return out;
}

OtResult solve_exact(const CostMatrix& cost) {
  check_cost(cost);
  const auto n = cost.entries.rows();
  const auto m = cost.entries.cols();
  if (n == 1 || m == 1) return trivial_plan(cost);

  OtResult res;
  if (n == m) {
    const auto assign = solve_assignment(cost.entries);
    res.plan.coupling = Matrix::Zero(n, m);
    const double w = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) res.plan.coupling(i, assign[i]) = w;
  } else {
    res.plan.coupling = solve_transportation(cost.entries);
  }
  res.cost = (res.plan.coupling.array() * cost.entries.array()).sum();
  return res;
}

OtResult solve_entropic(const CostMatrix& cost, const EntropicConfig& cfg) {
  check_cost(cost);
  require(cfg.max_iter >= 1, "entropic solver needs max_iter >= 1");
  const auto n = cost.entries.rows();
  const auto m = cost.entries.cols();
  if (n == 1 || m == 1) return trivial_plan(cost);

  double eps = 0.0;
  if (cfg.epsilon) {
    eps = *cfg.epsilon;
    require(eps > 0.0 && std::isfinite(eps), "entropic epsilon must be positive");
  } else {
    require(cfg.relative_epsilon > 0.0, "relative epsilon must be positive");
    eps = cfg.relative_epsilon * cost.entries.mean();
    if (!(eps > 0.0)) return trivial_plan(cost);  // all-zero costs: every coupling is optimal
  }

  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  Matrix scratch(n, m);
  OtResult res;
  res.converged = false;

  auto row_error = [&]() {
    double err = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) s += std::exp((f(i) + g(j) - cost.entries(i, j)) / eps);
      err += std::abs(s - std::exp(log_a));
    }
    return err;
  };

  for (int it = 1; it <= cfg.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) scratch(i, j) = (g(j) - cost.entries(i, j)) / eps;
      f(i) = eps * (log_a - log_sum_exp(scratch.data() + i * m, m, 1));
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) scratch(i, j) = (f(i) - cost.entries(i, j)) / eps;
      g(j) = eps * (log_b - log_sum_exp(scratch.data() + j, n, m));
    }
    res.iterations = it;
    res.marginal_error = row_error();
    if (res.marginal_error < cfg.tol) {
      res.converged = true;
      break;
    }
  }

  Matrix plan(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) plan(i, j) = std::exp((f(i) + g(j) - cost.entries(i, j)) / eps);
  }
  round_to_polytope(plan);
  res.plan.coupling = std::move(plan);
  res.cost = (res.plan.coupling.array() * cost.entries.array()).sum();
  return res;
}

OtResult solve(const CostMatrix& cost, const SolverConfig& cfg) {
  return cfg.kind == SolverKind::Exact ? solve_exact(cost) : solve_entropic(cost, cfg.entropic);
}

double wasserstein(const DiscreteDistribution& p, const DiscreteDistribution& q,
                   const GroundCost& ground, const SolverConfig& solver) {
  return solve(cost_matrix(p, q, ground), solver).cost;
}

double marginal_violation(const TransportPlan& plan) {
  const auto& c = plan.coupling;
  const double a = 1.0 / static_cast<double>(c.rows());
  const double b = 1.0 / static_cast<double>(c.cols());
  const double rows = (c.rowwise().sum().array() - a).abs().maxCoeff();
  const double cols = (c.colwise().sum().array() - b).abs().maxCoeff();
  return std::max(rows, cols);
}

}  // namespace feddadil
