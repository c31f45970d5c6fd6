#pragma once

// Fairness and performance measures. Group "0" is the baseline level of the
// protected attribute and group "1" is every other level.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairadapt/error.hpp"
#include "fairadapt/forest.hpp"
#include "fairadapt/random.hpp"
#include "fairadapt/sem_lab.hpp"
#include "fairadapt/tabular_data.hpp"

namespace fairadapt {

namespace detail {

inline void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ValidationError(std::string(what) + ": input lengths differ");
}

struct GroupMeans {
  double base = 0.0, other = 0.0;
  std::size_t n_base = 0, n_other = 0;
};

template <class F>
GroupMeans group_means(const std::vector<double>& v, const std::vector<double>& attr, double baseline, F f) {
  GroupMeans g;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (attr[i] == baseline) {
      g.base += f(v[i]);
      ++g.n_base;
    } else {
      g.other += f(v[i]);
      ++g.n_other;
    }
  }
  if (!g.n_base || !g.n_other) throw ValidationError("parity gap: both groups must be nonempty");
  g.base /= static_cast<double>(g.n_base);
  g.other /= static_cast<double>(g.n_other);
  return g;
}

}  // namespace detail

/// P(pred >= threshold | baseline) - P(pred >= threshold | other). With 0/1
/// inputs this is the plain positive-rate difference.
inline double parity_gap(const std::vector<double>& pred, const std::vector<double>& attr, double baseline = 0.0,
                         double threshold = 0.5) {
  detail::check_aligned(pred.size(), attr.size(), "parity gap");
  const auto g = detail::group_means(pred, attr, baseline, [&](double p) { return p >= threshold ? 1.0 : 0.0; });
  return g.base - g.other;
}

/// E[pred | baseline] - E[pred | other].
inline double parity_gap_expected(const std::vector<double>& pred, const std::vector<double>& attr,
                                  double baseline = 0.0) {
  detail::check_aligned(pred.size(), attr.size(), "parity gap");
  const auto g = detail::group_means(pred, attr, baseline, [](double p) { return p; });
  return g.base - g.other;
}

inline double accuracy(const std::vector<double>& probs, const std::vector<double>& labels) {
  detail::check_aligned(probs.size(), labels.size(), "accuracy");
  if (probs.empty()) throw ValidationError("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) hit += (probs[i] >= 0.5 ? 1.0 : 0.0) == labels[i];
  return static_cast<double>(hit) / static_cast<double>(probs.size());
}

/// Probability that a random positive scores above a random negative; ties count 1/2.
inline double auc(const std::vector<double>& probs, const std::vector<double>& labels) {
  detail::check_aligned(probs.size(), labels.size(), "auc");
  const std::size_t n = probs.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && probs[idx[j]] == probs[idx[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j + 1);  // 1-based average rank
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1.0) {
        rank_sum += mid_rank;
        ++pos;
      } else if (labels[idx[k]] != 0.0) {
        throw ValidationError("auc: labels must be 0 or 1");
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (!pos || !neg) throw ValidationError("auc: both classes must be present");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1) / 2) / (p * q);
}

/// (1/k) * sum over bins of |c0_i - c1_i|, where c_g is the positive-label
/// proportion of group g within bin [i/k, (i+1)/k) (the last bin includes 1).
/// A bin empty in either group contributes 0.
inline double calibration_score(const std::vector<double>& probs, const std::vector<double>& labels,
                                const std::vector<double>& attr, std::size_t k, double baseline = 0.0) {
  detail::check_aligned(probs.size(), labels.size(), "calibration");
  detail::check_aligned(probs.size(), attr.size(), "calibration");
  if (k == 0) throw ValidationError("calibration: k must be positive");
  std::vector<double> pos0(k, 0), n0(k, 0), pos1(k, 0), n1(k, 0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) throw ValidationError("calibration: probabilities must lie in [0, 1]");
    const auto b = std::min(k - 1, static_cast<std::size_t>(probs[i] * static_cast<double>(k)));
    if (attr[i] == baseline) {
      n0[b] += 1;
      pos0[b] += labels[i];
    } else {
      n1[b] += 1;
      pos1[b] += labels[i];
    }
  }
  double s = 0.0;
  for (std::size_t b = 0; b < k; ++b)
    if (n0[b] > 0 && n1[b] > 0) s += std::abs(pos0[b] / n0[b] - pos1[b] / n1[b]);
  return s / static_cast<double>(k);
}

struct KsResult {
  double statistic = 0.0;
  double critical = 0.0;  // level 0.01
  bool rejects() const { return statistic > critical; }
};

inline KsResult ks_two_sample(std::vector<double> x0, std::vector<double> x1) {
  if (x0.empty() || x1.empty()) throw ValidationError("ks: samples must be nonempty");
  std::sort(x0.begin(), x0.end());
  std::sort(x1.begin(), x1.end());
  const double n0 = static_cast<double>(x0.size()), n1 = static_cast<double>(x1.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x0.size() && j < x1.size()) {
    const double v = std::min(x0[i], x1[j]);
    while (i < x0.size() && x0[i] == v) ++i;
    while (j < x1.size() && x1[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n0 - static_cast<double>(j) / n1));
  }
  return {d, std::sqrt(-std::log(0.005) * (n0 + n1) / (2 * n0 * n1))};
}

/// Splits a column by group and runs the two-sample test.
inline KsResult ks_by_group(const std::vector<double>& values, const std::vector<double>& attr, double baseline = 0.0) {
  std::vector<double> a, b;
  for (std::size_t i = 0; i < values.size(); ++i) (attr[i] == baseline ? a : b).push_back(values[i]);
  return ks_two_sample(std::move(a), std::move(b));
}

/// Predictions for a batch of raw (unadapted) rows.
using BatchPredictor = std::function<std::vector<double>(const Dataset&)>;

/// Monte-Carlo E[Yhat(A=a, R=R(a')) - Yhat(A=a')] with a' the baseline and
/// a the other level, all counterfactuals sharing the same quantile draws.
inline double nde_estimate(const Sem& sem, const BatchPredictor& predictor, double baseline,
                           const std::set<std::string>& resolving, std::size_t n, std::uint64_t seed) {
  (void)sem.graph().with_resolving(resolving);
  const auto& a = sem.graph().protected_attribute();
  const double other = 1.0 - baseline;
  const auto u = sem.draw_quantiles(n, rng::combine(seed, rng::tag(rng::Purpose::experiment)));
  Matrix treated(n, sem.size()), base(n, sem.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto at_base = sem.evaluate(u.row(i), {{a, baseline}});
    std::map<std::string, double> iv{{a, other}};
    for (const auto& r : resolving) iv[r] = at_base[sem.index(r)];
    const auto mixed = sem.evaluate(u.row(i), iv);
    std::copy(at_base.begin(), at_base.end(), base.row(i).begin());
    std::copy(mixed.begin(), mixed.end(), treated.row(i).begin());
  }
  const auto p1 = predictor(sem.make_dataset(treated));
  const auto p0 = predictor(sem.make_dataset(base));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += p1[i] - p0[i];
  return s / static_cast<double>(n);
}

struct EvalReport {
  double accuracy = 0.0;
  double auc = 0.0;
  double parity_gap = 0.0;           // thresholded at 0.5
  double parity_gap_expected = 0.0;  // difference of mean probabilities
  double calibration_score = 0.0;
  std::size_t calibration_k = 10;
  std::size_t n_baseline = 0;
  std::size_t n_other = 0;
  std::optional<double> nde;
  std::optional<double> ripg_lhs;
  std::optional<double> ripg_bound;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["accuracy"] = accuracy;
    j["auc"] = auc;
    j["parity_gap"] = parity_gap;
    j["parity_gap_expected"] = parity_gap_expected;
    j["calibration_score"] = calibration_score;
    j["calibration_k"] = calibration_k;
    j["group_sizes"] = {{"baseline", n_baseline}, {"other", n_other}};
    if (nde) j["nde"] = *nde;
    if (ripg_lhs) j["ripg_lhs"] = *ripg_lhs;
    if (ripg_bound) j["ripg_bound"] = *ripg_bound;
    return j;
  }
};

inline EvalReport evaluate(const std::vector<double>& probs, const std::vector<double>& labels,
                           const std::vector<double>& attr, std::size_t k = 10, double baseline = 0.0) {
  detail::check_aligned(probs.size(), labels.size(), "evaluate");
  detail::check_aligned(probs.size(), attr.size(), "evaluate");
  EvalReport r;
  r.accuracy = accuracy(probs, labels);
  r.auc = auc(probs, labels);
  r.parity_gap = parity_gap(probs, attr, baseline);
  r.parity_gap_expected = parity_gap_expected(probs, attr, baseline);
  r.calibration_score = calibration_score(probs, labels, attr, k, baseline);
  r.calibration_k = k;
  for (double a : attr) (a == baseline ? r.n_baseline : r.n_other)++;
  return r;
}

/// Gaussian kernel density of the predictions per group on an even grid over
/// [0, 1], with Silverman's bandwidth. Rows: (x, density_baseline, density_other).
inline std::vector<std::array<double, 3>> density_grid(const std::vector<double>& probs,
                                                       const std::vector<double>& attr, double baseline = 0.0,
                                                       std::size_t points = 101) {
  detail::check_aligned(probs.size(), attr.size(), "density");
  if (points < 2) throw ValidationError("density: need at least two grid points");
  std::vector<double> g[2];
  for (std::size_t i = 0; i < probs.size(); ++i) g[attr[i] == baseline ? 0 : 1].push_back(probs[i]);
  double bw[2];
  for (int s = 0; s < 2; ++s) {
    if (g[s].empty()) throw ValidationError("density: both groups must be nonempty");
    const double n = static_cast<double>(g[s].size());
    double m = 0.0, v = 0.0;
    for (double x : g[s]) m += x;
    m /= n;
    for (double x : g[s]) v += (x - m) * (x - m);
    const double sd = std::sqrt(v / std::max(1.0, n - 1));
    bw[s] = std::max(1e-3, 1.06 * sd * std::pow(n, -0.2));
  }
  std::vector<std::array<double, 3>> out(points);
  const double norm = 1.0 / std::sqrt(2 * std::numbers::pi);
  for (std::size_t p = 0; p < points; ++p) {
    const double x = static_cast<double>(p) / static_cast<double>(points - 1);
    out[p][0] = x;
    for (int s = 0; s < 2; ++s) {
      double d = 0.0;
      for (double v : g[s]) {
        const double z = (x - v) / bw[s];
        d += std::exp(-0.5 * z * z);
      }
      out[p][1 + s] = d * norm / (bw[s] * static_cast<double>(g[s].size()));
    }
  }
  return out;
}

}  // namespace fairadapt
