#pragma once

// Small dense LP solver used only as a test oracle for the transport code.
// Two-phase tableau simplex with Bland's rule; fine for a few dozen variables.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace lp_oracle {

// minimize c.x  s.t.  A x = b, x >= 0.  Returns the optimal value, or nullopt
// when infeasible.  Unbounded problems throw (never happens for transport).
inline std::optional<double> minimize(const std::vector<std::vector<double>>& A, std::vector<double> b,
                                      const std::vector<double>& c, double eps = 1e-12) {
  const std::size_t m = A.size(), n = c.size();
  // columns: n originals, m artificials, rhs
  const std::size_t W = n + m + 1;
  std::vector<std::vector<double>> T(m, std::vector<double>(W, 0.0));
  std::vector<std::size_t> basis(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double s = b[i] < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) T[i][j] = s * A[i][j];
    T[i][n + i] = 1.0;
    T[i][W - 1] = s * b[i];
    basis[i] = n + i;
  }

  auto pivot = [&](std::size_t r, std::size_t col) {
    const double p = T[r][col];
    for (auto& v : T[r]) v /= p;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == r || T[i][col] == 0.0) continue;
      const double f = T[i][col];
      for (std::size_t j = 0; j < W; ++j) T[i][j] -= f * T[r][j];
    }
    basis[r] = col;
  };

  // Runs simplex on objective `cost` (length W-1) over allowed columns.
  auto run = [&](const std::vector<double>& cost, std::size_t allowed) {
    for (;;) {
      // reduced costs
      std::size_t enter = W;
      for (std::size_t j = 0; j < allowed; ++j) {
        double rc = cost[j];
        for (std::size_t i = 0; i < m; ++i) rc -= cost[basis[i]] * T[i][j];
        if (rc < -eps) {
          enter = j;  // Bland: lowest index
          break;
        }
      }
      if (enter == W) return;
      std::size_t leave = m;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m; ++i) {
        if (T[i][enter] > eps) {
          const double ratio = T[i][W - 1] / T[i][enter];
          if (ratio < best - eps || (std::abs(ratio - best) <= eps && leave < m && basis[i] < basis[leave])) {
            best = ratio;
            leave = i;
          }
        }
      }
      if (leave == m) throw std::runtime_error("lp_oracle: unbounded");
      pivot(leave, enter);
    }
  };

  std::vector<double> phase1(W - 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) phase1[n + i] = 1.0;
  run(phase1, n + m);
  double infeas = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] >= n) infeas += T[i][W - 1];
  if (infeas > 1e-9) return std::nullopt;

  // Drive zero-level artificials out of the basis where possible.
  for (std::size_t i = 0; i < m; ++i) {
    if (basis[i] < n) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(T[i][j]) > 1e-9) {
        pivot(i, j);
        break;
      }
    }
  }
  // Rows whose artificial is still basic are redundant; they stay inert
  // because every original column has a zero entry there.
  std::vector<double> phase2(W - 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) phase2[j] = c[j];
  run(phase2, n);
  double value = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] < n) value += c[basis[i]] * T[i][W - 1];
  return value;
}

// Optimal transport cost between marginals with cost(i, j).
template <class Cost>
double transport_optimum(const std::vector<double>& source, const std::vector<double>& target, Cost cost) {
  const std::size_t m = source.size();
  std::vector<std::vector<double>> A;
  std::vector<double> b, c(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> row(m * m, 0.0);
    for (std::size_t j = 0; j < m; ++j) row[i * m + j] = 1.0;
    A.push_back(row);
    b.push_back(source[i]);
  }
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> row(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) row[i * m + j] = 1.0;
    A.push_back(row);
    b.push_back(target[j]);
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) c[i * m + j] = cost(i, j);
  auto v = minimize(A, b, c);
  if (!v) throw std::runtime_error("lp_oracle: transport LP infeasible");
  return *v;
}

}  // namespace lp_oracle
