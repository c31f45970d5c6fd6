#pragma once

// Optimal transport between two discrete distributions on m levels.
// Rows of a plan index the observed group's levels, columns the baseline
// group's levels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "fairadapt/error.hpp"

namespace fairadapt {

enum class CostKind { lp, zero_one };

/// Raised when the counterfactual row of a level carries no mass.
class ZeroMassRowError : public NumericalError {
 public:
  explicit ZeroMassRowError(std::size_t level)
      : NumericalError("transport plan row " + std::to_string(level) + " has zero mass"), level_(level) {}
  std::size_t level() const { return level_; }

 private:
  std::size_t level_;
};

struct TransportPlan {
  std::size_t m = 0;
  std::vector<double> plan;  // row-major m x m
  std::vector<double> source;
  std::vector<double> target;
  CostKind cost = CostKind::lp;
  double exponent = 2.0;

  double operator()(std::size_t i, std::size_t j) const { return plan[i * m + j]; }
  double& operator()(std::size_t i, std::size_t j) { return plan[i * m + j]; }

  std::vector<double> row_sums() const {
    std::vector<double> r(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) r[i] += (*this)(i, j);
    return r;
  }
  std::vector<double> col_sums() const {
    std::vector<double> c(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) c[j] += (*this)(i, j);
    return c;
  }
};

namespace detail {

/// Checks a probability vector. Sums within 1e-9 of 1 are renormalized;
/// anything further off, negative, or non-finite is rejected.
inline std::vector<double> checked_marginal(std::vector<double> p, const char* which) {
  if (p.empty()) throw ValidationError(std::string("transport: empty ") + which + " marginal");
  double s = 0.0;
  for (double v : p) {
    if (!std::isfinite(v)) throw ValidationError(std::string("transport: non-finite mass in ") + which);
    if (v < 0.0) throw ValidationError(std::string("transport: negative mass in ") + which);
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw ValidationError(std::string("transport: ") + which + " marginal sums to " + std::to_string(s) +
                          ", expected 1");
  if (s != 1.0)
    for (auto& v : p) v /= s;
  return p;
}

inline std::vector<double> cumulative(const std::vector<double>& p) {
  std::vector<double> c(p.size() + 1, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) c[i + 1] = c[i] + p[i];
  return c;
}

/// Monotone (northwest-corner) coupling of two mass vectors with equal total
/// `total`, written via interval overlaps of the cumulative sums so that each
/// entry is a single difference.
inline void monotone_fill(const std::vector<double>& a, const std::vector<double>& b, double total,
                          std::vector<std::size_t> rows, std::vector<std::size_t> cols, TransportPlan& out) {
  auto A = cumulative(a), B = cumulative(b);
  A.back() = total;
  B.back() = total;
  std::size_t j = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    while (j < b.size() && B[j + 1] <= A[i]) ++j;
    for (std::size_t k = j; k < b.size() && B[k] < A[i + 1]; ++k) {
      const double v = std::min(A[i + 1], B[k + 1]) - std::max(A[i], B[k]);
      if (v > 0.0) out(rows[i], cols[k]) += v;
    }
  }
}

}  // namespace detail

/// Optimal plan for cost |i - j|^exponent (exponent >= 1; unique when > 1).
inline TransportPlan solve_monotone(std::vector<double> source, std::vector<double> target, double exponent = 2.0) {
  if (source.size() != target.size()) throw ValidationError("transport: marginal length mismatch");
  if (!(exponent >= 1.0)) throw ValidationError("transport: exponent must be >= 1");
  TransportPlan tp;
  tp.source = detail::checked_marginal(std::move(source), "source");
  tp.target = detail::checked_marginal(std::move(target), "target");
  tp.m = tp.source.size();
  tp.plan.assign(tp.m * tp.m, 0.0);
  tp.cost = CostKind::lp;
  tp.exponent = exponent;
  std::vector<std::size_t> idx(tp.m);
  std::iota(idx.begin(), idx.end(), 0);
  detail::monotone_fill(tp.source, tp.target, 1.0, idx, idx, tp);
  return tp;
}

/// Optimal plan for the 0-1 cost: keep min(source_i, target_i) in place and
/// couple the residual masses by a monotone sweep. The optimum is not unique;
/// this choice is deterministic.
inline TransportPlan solve_zero_one(std::vector<double> source, std::vector<double> target) {
  if (source.size() != target.size()) throw ValidationError("transport: marginal length mismatch");
  TransportPlan tp;
  tp.source = detail::checked_marginal(std::move(source), "source");
  tp.target = detail::checked_marginal(std::move(target), "target");
  tp.m = tp.source.size();
  tp.plan.assign(tp.m * tp.m, 0.0);
  tp.cost = CostKind::zero_one;
  tp.exponent = 0.0;

  std::vector<double> rs, rt;
  std::vector<std::size_t> ri, rj;
  for (std::size_t i = 0; i < tp.m; ++i) {
    const double d = std::min(tp.source[i], tp.target[i]);
    tp(i, i) = d;
    if (tp.source[i] > d) {
      rs.push_back(tp.source[i] - d);
      ri.push_back(i);
    }
    if (tp.target[i] > d) {
      rt.push_back(tp.target[i] - d);
      rj.push_back(i);
    }
  }
  if (!rs.empty() && !rt.empty()) {
    const double total = std::accumulate(rs.begin(), rs.end(), 0.0);
    detail::monotone_fill(rs, rt, total, ri, rj, tp);
  }
  return tp;
}

inline double cost_entry(const TransportPlan& tp, std::size_t i, std::size_t j) {
  if (tp.cost == CostKind::zero_one) return i == j ? 0.0 : 1.0;
  const double d = std::abs(static_cast<double>(i) - static_cast<double>(j));
  return tp.exponent == 2.0 ? d * d : std::pow(d, tp.exponent);
}

inline double plan_cost(const TransportPlan& tp) {
  double c = 0.0;
  for (std::size_t i = 0; i < tp.m; ++i)
    for (std::size_t j = 0; j < tp.m; ++j) c += tp(i, j) * cost_entry(tp, i, j);
  return c;
}

/// Normalized plan row: the law of the baseline-world level given the
/// observed level.
inline std::vector<double> counterfactual_distribution(const TransportPlan& tp, std::size_t observed_level) {
  if (observed_level >= tp.m) throw ValidationError("transport: level index out of range");
  std::vector<double> row(tp.plan.begin() + static_cast<std::ptrdiff_t>(observed_level * tp.m),
                          tp.plan.begin() + static_cast<std::ptrdiff_t>((observed_level + 1) * tp.m));
  const double s = std::accumulate(row.begin(), row.end(), 0.0);
  if (!(s > 0.0)) throw ZeroMassRowError(observed_level);
  for (auto& v : row) v /= s;
  return row;
}

/// Smallest level whose cumulative mass reaches u, restricted to levels with
/// positive mass.
inline std::size_t sample_counterfactual(const std::vector<double>& dist, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw ValidationError("transport: draw must lie in [0, 1]");
  double c = 0.0;
  std::size_t last = dist.size();
  for (std::size_t k = 0; k < dist.size(); ++k) {
    if (!(dist[k] > 0.0)) continue;
    c += dist[k];
    last = k;
    if (c >= u) return k;
  }
  if (last == dist.size()) throw ValidationError("transport: distribution has no mass");
  return last;
}

}  // namespace fairadapt
