#pragma once

// Random forests for conditional distributions: quantile regression forests
// (weighted empirical conditional CDF and its generalized inverse) and
// probability forests (leaf class frequencies).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairadapt/error.hpp"
#include "fairadapt/parallel.hpp"
#include "fairadapt/random.hpp"

namespace fairadapt {

struct ForestParams {
  std::size_t num_trees = 100;
  std::size_t min_node_size = 5;
  std::optional<std::size_t> features_per_split;  // unset: ceil(sqrt(p))
  double bootstrap_fraction = 1.0;
  std::uint64_t seed = 0;
  std::size_t num_threads = 0;  // 0: default_thread_count()

  void validate() const {
    if (num_trees == 0) throw ValidationError("forest: num_trees must be positive");
    if (min_node_size == 0) throw ValidationError("forest: min_node_size must be positive");
    if (features_per_split && *features_per_split == 0)
      throw ValidationError("forest: features_per_split must be positive");
    if (!(bootstrap_fraction > 0.0 && bootstrap_fraction <= 1.0))
      throw ValidationError("forest: bootstrap_fraction must lie in (0, 1]");
  }
};

/// Row-major dense matrix of predictor values.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
};

/// Per predictor column: 0 for numeric, otherwise the number of categories
/// (values are category indices).
struct PredictorSchema {
  std::vector<std::size_t> categories;

  std::size_t size() const { return categories.size(); }
  bool categorical(std::size_t j) const { return categories[j] > 0; }
  static PredictorSchema numeric(std::size_t p) { return {std::vector<std::size_t>(p, 0)}; }
  friend bool operator==(const PredictorSchema&, const PredictorSchema&) = default;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // numeric: go left iff x <= threshold
  std::uint32_t cat_offset = 0;
  std::uint32_t cat_count = 0;  // categorical: levels with a 1 in the mask go left
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf = -1;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<std::uint8_t> cat_left;
  std::uint32_t num_leaves = 0;

  std::uint32_t leaf_of(std::span<const double> x) const {
    std::size_t n = 0;
    while (nodes[n].feature >= 0) {
      const auto& node = nodes[n];
      const double v = x[static_cast<std::size_t>(node.feature)];
      bool left;
      if (node.cat_count > 0) {
        const auto level = static_cast<std::size_t>(v);
        left = v >= 0 && level < node.cat_count && cat_left[node.cat_offset + level];
      } else {
        left = v <= node.threshold;
      }
      n = static_cast<std::size_t>(left ? node.left : node.right);
    }
    return static_cast<std::uint32_t>(nodes[n].leaf);
  }

  friend bool operator==(const Tree&, const Tree&) = default;
};

namespace detail {

// Variance reduction: maximizes S_L^2/n_L + S_R^2/n_R.
struct RegressionCriterion {
  const std::vector<double>* y;

  struct Stats {
    double sum = 0.0;
    std::size_t n = 0;
  };
  Stats empty() const { return {}; }
  void add(Stats& s, std::size_t r) const {
    s.sum += (*y)[r];
    ++s.n;
  }
  void remove(Stats& s, std::size_t r) const {
    s.sum -= (*y)[r];
    --s.n;
  }
  double score(const Stats& s) const { return s.n ? s.sum * s.sum / static_cast<double>(s.n) : 0.0; }
  double key(std::size_t r) const { return (*y)[r]; }
  bool pure(std::span<const std::size_t> rows) const {
    for (auto r : rows)
      if ((*y)[r] != (*y)[rows[0]]) return false;
    return true;
  }
};

// Gini: maximizes sum_k c_Lk^2/n_L + sum_k c_Rk^2/n_R.
struct GiniCriterion {
  const std::vector<std::size_t>* y;
  std::size_t classes;

  struct Stats {
    std::vector<double> counts;
    double sumsq = 0.0;
    std::size_t n = 0;
  };
  Stats empty() const { return {std::vector<double>(classes, 0.0), 0.0, 0}; }
  void add(Stats& s, std::size_t r) const {
    auto& c = s.counts[(*y)[r]];
    s.sumsq += 2.0 * c + 1.0;
    c += 1.0;
    ++s.n;
  }
  void remove(Stats& s, std::size_t r) const {
    auto& c = s.counts[(*y)[r]];
    s.sumsq -= 2.0 * c - 1.0;
    c -= 1.0;
    --s.n;
  }
  double score(const Stats& s) const { return s.n ? s.sumsq / static_cast<double>(s.n) : 0.0; }
  double key(std::size_t r) const { return static_cast<double>((*y)[r]); }
  bool pure(std::span<const std::size_t> rows) const {
    for (auto r : rows)
      if ((*y)[r] != (*y)[rows[0]]) return false;
    return true;
  }
};

// Best threshold along one axis. pts holds (axis value, row) ascending in the
// axis value.
template <class Criterion>
bool scan_axis(const Criterion& crit, const std::vector<std::pair<double, std::size_t>>& pts, std::size_t min_node,
               const typename Criterion::Stats& total, double& best_score, std::size_t& best_pos) {
  const std::size_t n = pts.size();
  if (pts.front().first == pts.back().first) return false;
  auto left = crit.empty();
  auto right = total;
  bool found = false;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    crit.add(left, pts[i].second);
    crit.remove(right, pts[i].second);
    if (pts[i].first == pts[i + 1].first) continue;
    if (i + 1 < min_node || n - i - 1 < min_node) continue;
    const double s = crit.score(left) + crit.score(right);
    if (s > best_score) {
      best_score = s;
      best_pos = i;
      found = true;
    }
  }
  return found;
}

// Rows of the sample, once in sample order and once per numeric feature sorted
// by that feature. A node owns the same [begin, end) range in every list.
struct NodeLists {
  std::vector<std::size_t> base;
  std::vector<std::vector<std::size_t>> sorted;  // empty for categorical features
  std::vector<std::size_t> buffer;

  void partition(std::vector<std::size_t>& v, std::size_t b, std::size_t e, const auto& goes_left) {
    buffer.clear();
    std::size_t w = b;
    for (std::size_t i = b; i < e; ++i) {
      if (goes_left(v[i]))
        v[w++] = v[i];
      else
        buffer.push_back(v[i]);
    }
    std::copy(buffer.begin(), buffer.end(), v.begin() + static_cast<std::ptrdiff_t>(w));
  }
};

/// Grows one tree on the (bootstrap) sample. Nodes split only when they hold
/// at least 2 * min_node rows and are impure; each child keeps >= min_node rows.
template <class Criterion>
Tree grow_tree(const Matrix& X, const PredictorSchema& schema, const Criterion& crit, std::vector<std::size_t> sample,
               std::size_t min_node, std::size_t mtry, std::mt19937_64& eng) {
  Tree tree;
  const std::size_t m = sample.size();
  NodeLists lists;
  lists.sorted.resize(X.cols);
  for (std::size_t j = 0; j < X.cols; ++j) {
    if (schema.categorical(j)) continue;
    auto& v = lists.sorted[j];
    v = sample;
    std::sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) {
      const double xa = X(a, j), xb = X(b, j);
      return xa != xb ? xa < xb : a < b;
    });
  }
  lists.base = std::move(sample);
  lists.buffer.reserve(m);

  struct Pending {
    std::size_t node, begin, end;
  };
  tree.nodes.emplace_back();
  std::vector<Pending> stack{{0, 0, m}};
  std::vector<std::size_t> features(X.cols);
  std::vector<std::pair<double, std::size_t>> pts;
  pts.reserve(m);
  std::vector<double> rank_of_level, best_rank;
  std::vector<double> sum;
  std::vector<std::size_t> cnt, present;

  while (!stack.empty()) {
    const auto job = stack.back();
    stack.pop_back();
    std::span<const std::size_t> rows(lists.base.data() + job.begin, job.end - job.begin);
    const std::size_t n = rows.size();

    bool found = false;
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    std::vector<std::uint8_t> best_cats;
    if (n >= 2 * min_node && !crit.pure(rows) && X.cols > 0) {
      auto total = crit.empty();
      for (auto r : rows) crit.add(total, r);
      const double parent = crit.score(total);
      double best_score = parent + 1e-12 * std::abs(parent) + 1e-300;
      std::iota(features.begin(), features.end(), 0);
      for (std::size_t k = 0; k < mtry; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(eng() % (X.cols - k));
        std::swap(features[k], features[j]);
        const std::size_t f = features[k];
        pts.clear();
        if (schema.categorical(f)) {
          // Levels ranked by mean response, then bucketed in rank order.
          const std::size_t K = schema.categories[f];
          sum.assign(K, 0.0);
          cnt.assign(K, 0);
          for (auto r : rows) {
            const auto lv = static_cast<std::size_t>(X(r, f));
            if (lv >= K) throw ValidationError("forest: category index out of range in predictor column");
            sum[lv] += crit.key(r);
            ++cnt[lv];
          }
          present.clear();
          for (std::size_t l = 0; l < K; ++l)
            if (cnt[l]) present.push_back(l);
          if (present.size() < 2) continue;
          std::sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) {
            const double ma = sum[a] / static_cast<double>(cnt[a]);
            const double mb = sum[b] / static_cast<double>(cnt[b]);
            return ma != mb ? ma < mb : a < b;
          });
          rank_of_level.assign(K, -1.0);
          std::vector<std::size_t> start(present.size() + 1, 0);
          for (std::size_t i = 0; i < present.size(); ++i) {
            rank_of_level[present[i]] = static_cast<double>(i);
            start[i + 1] = start[i] + cnt[present[i]];
          }
          pts.resize(n);
          for (auto r : rows) {
            const auto rk = static_cast<std::size_t>(rank_of_level[static_cast<std::size_t>(X(r, f))]);
            pts[start[rk]++] = {static_cast<double>(rk), r};
          }
        } else {
          const auto& v = lists.sorted[f];
          for (std::size_t i = job.begin; i < job.end; ++i) pts.emplace_back(X(v[i], f), v[i]);
        }
        std::size_t pos = n;
        if (!scan_axis(crit, pts, min_node, total, best_score, pos)) continue;
        found = true;
        best_feature = f;
        const double lo = pts[pos].first, hi = pts[pos + 1].first;
        if (schema.categorical(f)) {
          best_cats.assign(schema.categories[f], 0);
          for (std::size_t l = 0; l < rank_of_level.size(); ++l)
            if (rank_of_level[l] >= 0 && rank_of_level[l] <= lo) best_cats[l] = 1;
          best_threshold = 0.0;
        } else {
          best_cats.clear();
          const double mid = lo + (hi - lo) / 2.0;
          best_threshold = (mid < hi) ? mid : lo;
        }
      }
    }

    if (!found) {
      tree.nodes[job.node].leaf = static_cast<std::int32_t>(tree.num_leaves++);
      continue;
    }

    auto& node = tree.nodes[job.node];
    node.feature = static_cast<std::int32_t>(best_feature);
    node.threshold = best_threshold;
    if (!best_cats.empty()) {
      node.cat_offset = static_cast<std::uint32_t>(tree.cat_left.size());
      node.cat_count = static_cast<std::uint32_t>(best_cats.size());
      tree.cat_left.insert(tree.cat_left.end(), best_cats.begin(), best_cats.end());
    }
    auto goes_left = [&](std::size_t r) {
      const double v = X(r, best_feature);
      if (!best_cats.empty()) return best_cats[static_cast<std::size_t>(v)] != 0;
      return v <= best_threshold;
    };
    lists.partition(lists.base, job.begin, job.end, goes_left);
    for (auto& v : lists.sorted)
      if (!v.empty()) lists.partition(v, job.begin, job.end, goes_left);
    const std::size_t mid = job.begin + static_cast<std::size_t>(std::count_if(
                                            lists.base.begin() + static_cast<std::ptrdiff_t>(job.begin),
                                            lists.base.begin() + static_cast<std::ptrdiff_t>(job.end), goes_left));

    const auto left_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    tree.nodes[job.node].left = left_id;
    tree.nodes[job.node].right = left_id + 1;
    stack.push_back({static_cast<std::size_t>(left_id + 1), mid, job.end});
    stack.push_back({static_cast<std::size_t>(left_id), job.begin, mid});
  }
  return tree;
}

inline std::vector<std::size_t> bootstrap_sample(std::size_t n, double fraction, std::mt19937_64& eng) {
  const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::vector<std::size_t> s(m);
  for (auto& v : s) v = static_cast<std::size_t>(eng() % n);
  return s;
}

inline std::size_t resolve_mtry(const ForestParams& params, std::size_t p) {
  if (p == 0) return 0;
  std::size_t m = params.features_per_split ? *params.features_per_split
                                            : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
  return std::clamp<std::size_t>(m, 1, p);
}

inline void check_training_input(const Matrix& X, std::size_t n_response, const PredictorSchema& schema,
                                 const ForestParams& params) {
  params.validate();
  if (X.rows != n_response) throw ValidationError("forest: predictor and response row counts differ");
  if (schema.size() != X.cols) throw ValidationError("forest: schema does not match predictor columns");
  if (X.rows < 2 * params.min_node_size)
    throw ValidationError("forest: too few rows (" + std::to_string(X.rows) + "), need at least " +
                          std::to_string(2 * params.min_node_size));
  for (double v : X.data)
    if (!std::isfinite(v)) throw ValidationError("forest: non-finite predictor value");
}

}  // namespace detail

/// Leaf index per tree for one query point; lets callers reuse a traversal.
using LeafSet = std::vector<std::uint32_t>;

class QuantileForest {
 public:
  static QuantileForest fit(const Matrix& X, std::vector<double> y, const PredictorSchema& schema,
                            const ForestParams& params) {
    detail::check_training_input(X, y.size(), schema, params);
    for (double v : y)
      if (!std::isfinite(v)) throw ValidationError("forest: non-finite response value");

    QuantileForest f;
    f.schema_ = schema;
    f.n_ = X.rows;
    f.trees_.resize(params.num_trees);
    f.leaf_offsets_.resize(params.num_trees);
    f.leaf_values_.resize(params.num_trees);
    f.leaf_rows_.resize(params.num_trees);
    const auto mtry = detail::resolve_mtry(params, X.cols);
    const detail::RegressionCriterion crit{&y};

    parallel_for(params.num_trees, params.num_threads, [&](std::size_t t) {
      auto eng = rng::engine(params.seed, {rng::tag(rng::Purpose::forest), t});
      auto sample = detail::bootstrap_sample(X.rows, params.bootstrap_fraction, eng);
      f.trees_[t] = detail::grow_tree(X, schema, crit, std::move(sample), params.min_node_size, mtry, eng);
      // Leaf membership uses every training row, not only the bootstrap draw.
      const auto& tree = f.trees_[t];
      std::vector<std::uint32_t> leaf(X.rows);
      std::vector<std::uint32_t> count(tree.num_leaves + 1, 0);
      for (std::size_t i = 0; i < X.rows; ++i) {
        leaf[i] = tree.leaf_of(X.row(i));
        ++count[leaf[i] + 1];
      }
      auto& off = f.leaf_offsets_[t];
      off.assign(count.begin(), count.end());
      std::partial_sum(off.begin(), off.end(), off.begin());
      auto& rows = f.leaf_rows_[t];
      rows.resize(X.rows);
      std::vector<std::uint32_t> cursor(off.begin(), off.end() - 1);
      for (std::size_t i = 0; i < X.rows; ++i) rows[cursor[leaf[i]]++] = static_cast<std::uint32_t>(i);
      auto& vals = f.leaf_values_[t];
      vals.resize(X.rows);
      for (std::uint32_t l = 0; l < tree.num_leaves; ++l) {
        auto b = rows.begin() + off[l];
        auto e = rows.begin() + off[l + 1];
        std::sort(b, e, [&](std::uint32_t a, std::uint32_t c) { return y[a] != y[c] ? y[a] < y[c] : a < c; });
        for (auto i = off[l]; i < off[l + 1]; ++i) vals[i] = y[rows[i]];
      }
    });
    f.sorted_y_ = std::move(y);
    std::sort(f.sorted_y_.begin(), f.sorted_y_.end());
    return f;
  }

  std::size_t num_trees() const { return trees_.size(); }
  std::size_t num_features() const { return schema_.size(); }
  std::size_t num_rows() const { return n_; }
  const PredictorSchema& schema() const { return schema_; }
  const std::vector<Tree>& trees() const { return trees_; }

  LeafSet leaves(std::span<const double> x) const {
    if (x.size() != schema_.size())
      throw ValidationError("forest: query has " + std::to_string(x.size()) + " predictors, expected " +
                            std::to_string(schema_.size()));
    LeafSet out(trees_.size());
    for (std::size_t t = 0; t < trees_.size(); ++t) out[t] = trees_[t].leaf_of(x);
    return out;
  }

  /// Randomized PIT: F(y-) + jitter * (F(y) - F(y-)). jitter = 1 gives the
  /// right-continuous weighted empirical CDF.
  double cdf(const LeafSet& leaves, double y, double jitter) const {
    if (!(jitter >= 0.0 && jitter <= 1.0)) throw ValidationError("forest: jitter must lie in [0, 1]");
    double le = 0.0, lt = 0.0;
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      const auto [b, e] = leaf_range(t, leaves[t]);
      const double n = static_cast<double>(e - b);
      lt += static_cast<double>(std::lower_bound(b, e, y) - b) / n;
      le += static_cast<double>(std::upper_bound(b, e, y) - b) / n;
    }
    const double T = static_cast<double>(trees_.size());
    const double F = std::min(1.0, le / T), Fm = std::min(F, lt / T);
    return std::clamp(Fm + jitter * (F - Fm), Fm, F);
  }
  double cdf(std::span<const double> x, double y, double jitter) const { return cdf(leaves(x), y, jitter); }

  /// Smallest training response y with F(y | x) >= u. u = 0 gives the minimum
  /// of the weighted support and u = 1 its maximum.
  double quantile(const LeafSet& leaves, double u) const {
    if (!(u >= 0.0 && u <= 1.0)) throw ValidationError("forest: quantile level must lie in [0, 1]");
    double lo_v = sorted_y_.back(), hi_v = sorted_y_.front();
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      const auto [b, e] = leaf_range(t, leaves[t]);
      lo_v = std::min(lo_v, *b);
      hi_v = std::max(hi_v, *(e - 1));
    }
    if (u == 0.0) return lo_v;
    // Absorb rounding in the accumulated weights so that u = F(atom) maps back
    // to that atom.
    const double target = u - 1e-12;
    auto lo = std::lower_bound(sorted_y_.begin(), sorted_y_.end(), lo_v);
    auto hi = std::upper_bound(sorted_y_.begin(), sorted_y_.end(), hi_v);
    while (lo < hi) {
      auto mid = lo + (hi - lo) / 2;
      if (cdf(leaves, *mid, 1.0) >= target)
        hi = mid;
      else
        lo = mid + 1;
    }
    return lo == sorted_y_.end() || *lo > hi_v ? hi_v : *lo;
  }
  double quantile(std::span<const double> x, double u) const { return quantile(leaves(x), u); }

  /// Weight of each training row in the conditional distribution at x.
  std::vector<double> weights(std::span<const double> x) const {
    const auto ls = leaves(x);
    std::vector<double> w(n_, 0.0);
    const double T = static_cast<double>(trees_.size());
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      const auto b = leaf_offsets_[t][ls[t]], e = leaf_offsets_[t][ls[t] + 1];
      const double share = 1.0 / (T * static_cast<double>(e - b));
      for (auto i = b; i < e; ++i) w[leaf_rows_[t][i]] += share;
    }
    return w;
  }

  /// The weighted empirical distribution at one query point, flattened to
  /// sorted atoms with cumulative weights. Worth building when many queries
  /// share the same leaves.
  struct Distribution {
    std::vector<double> atoms;
    std::vector<double> cumulative;  // F(atoms[k])

    double cdf(double y, double jitter) const {
      const auto hi = std::upper_bound(atoms.begin(), atoms.end(), y) - atoms.begin();
      const auto lo = std::lower_bound(atoms.begin(), atoms.end(), y) - atoms.begin();
      const double F = hi ? std::min(1.0, cumulative[static_cast<std::size_t>(hi - 1)]) : 0.0;
      const double Fm = std::min(F, lo ? cumulative[static_cast<std::size_t>(lo - 1)] : 0.0);
      return std::clamp(Fm + jitter * (F - Fm), Fm, F);
    }
    double quantile(double u) const {
      if (u == 0.0) return atoms.front();
      const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u - 1e-12);
      return it == cumulative.end() ? atoms.back() : atoms[static_cast<std::size_t>(it - cumulative.begin())];
    }
  };

  Distribution distribution(const LeafSet& leaves) const {
    std::vector<std::pair<double, double>> pts;
    const double T = static_cast<double>(trees_.size());
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      const auto [b, e] = leaf_range(t, leaves[t]);
      const double w = 1.0 / (T * static_cast<double>(e - b));
      for (auto p = b; p != e; ++p) pts.emplace_back(*p, w);
    }
    std::sort(pts.begin(), pts.end());
    Distribution d;
    double c = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      c += pts[k].second;
      if (k + 1 < pts.size() && pts[k + 1].first == pts[k].first) continue;
      d.atoms.push_back(pts[k].first);
      d.cumulative.push_back(c);
    }
    return d;
  }

  bool same_structure(const QuantileForest& o) const { return trees_ == o.trees_ && leaf_rows_ == o.leaf_rows_; }

 private:
  std::pair<const double*, const double*> leaf_range(std::size_t t, std::uint32_t leaf) const {
    const auto* base = leaf_values_[t].data();
    return {base + leaf_offsets_[t][leaf], base + leaf_offsets_[t][leaf + 1]};
  }

  PredictorSchema schema_;
  std::size_t n_ = 0;
  std::vector<Tree> trees_;
  std::vector<std::vector<std::uint32_t>> leaf_offsets_;
  std::vector<std::vector<double>> leaf_values_;  // per leaf, ascending
  std::vector<std::vector<std::uint32_t>> leaf_rows_;
  std::vector<double> sorted_y_;
};

class ProbabilityForest {
 public:
  /// labels are level indices in [0, num_levels).
  static ProbabilityForest fit(const Matrix& X, const std::vector<std::size_t>& labels, std::size_t num_levels,
                               const PredictorSchema& schema, const ForestParams& params) {
    detail::check_training_input(X, labels.size(), schema, params);
    if (num_levels == 0) throw ValidationError("forest: need at least one class level");
    for (auto l : labels)
      if (l >= num_levels) throw ValidationError("forest: class label out of range");

    ProbabilityForest f;
    f.schema_ = schema;
    f.levels_ = num_levels;
    f.trees_.resize(params.num_trees);
    f.leaf_probs_.resize(params.num_trees);
    const auto mtry = detail::resolve_mtry(params, X.cols);
    const detail::GiniCriterion crit{&labels, num_levels};

    parallel_for(params.num_trees, params.num_threads, [&](std::size_t t) {
      auto eng = rng::engine(params.seed, {rng::tag(rng::Purpose::forest), t});
      auto sample = detail::bootstrap_sample(X.rows, params.bootstrap_fraction, eng);
      const auto in_bag = sample;
      f.trees_[t] = detail::grow_tree(X, schema, crit, std::move(sample), params.min_node_size, mtry, eng);
      // Leaf class frequencies come from the in-bag draw, with multiplicity.
      const auto& tree = f.trees_[t];
      auto& probs = f.leaf_probs_[t];
      probs.assign(static_cast<std::size_t>(tree.num_leaves) * num_levels, 0.0);
      std::vector<double> total(tree.num_leaves, 0.0);
      for (auto r : in_bag) {
        const auto l = tree.leaf_of(X.row(r));
        probs[l * num_levels + labels[r]] += 1.0;
        total[l] += 1.0;
      }
      for (std::uint32_t l = 0; l < tree.num_leaves; ++l)
        for (std::size_t k = 0; k < num_levels; ++k) probs[l * num_levels + k] /= total[l];
    });
    return f;
  }

  std::size_t num_levels() const { return levels_; }
  std::size_t num_trees() const { return trees_.size(); }
  const PredictorSchema& schema() const { return schema_; }
  const std::vector<Tree>& trees() const { return trees_; }

  LeafSet leaves(std::span<const double> x) const {
    if (x.size() != schema_.size())
      throw ValidationError("forest: query has " + std::to_string(x.size()) + " predictors, expected " +
                            std::to_string(schema_.size()));
    LeafSet out(trees_.size());
    for (std::size_t t = 0; t < trees_.size(); ++t) out[t] = trees_[t].leaf_of(x);
    return out;
  }

  /// Class probabilities averaged over trees; nonnegative, summing to 1.
  std::vector<double> predict(const LeafSet& leaves) const {
    std::vector<double> p(levels_, 0.0);
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      const double* row = leaf_probs_[t].data() + static_cast<std::size_t>(leaves[t]) * levels_;
      for (std::size_t k = 0; k < levels_; ++k) p[k] += row[k];
    }
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= s;
    return p;
  }
  std::vector<double> predict(std::span<const double> x) const { return predict(leaves(x)); }

 private:
  PredictorSchema schema_;
  std::size_t levels_ = 0;
  std::vector<Tree> trees_;
  std::vector<std::vector<double>> leaf_probs_;
};

}  // namespace fairadapt
