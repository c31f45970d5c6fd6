// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fairadapt/experiments.hpp"
#include "fairadapt/fairadapt.hpp"
#include "support/lp_oracle.hpp"
#include "support/properties.hpp"

using namespace fairadapt;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

Outcome transport_example() {
  const auto tp = solve_monotone({0.6, 0.4}, {0.5, 0.5});
  const auto row = counterfactual_distribution(tp, 0);
  const double err = std::max(std::abs(row[0] - 5.0 / 6.0), std::abs(row[1] - 1.0 / 6.0));
  return {err <= 1e-12, "row 0 = (" + fmt(row[0], 17) + ", " + fmt(row[1], 17) + "), error " + fmt(err, 3)};
}

Outcome binary_rule() {
  double worst = 0.0;
  for (int i = 1; i <= 99; ++i) {
    for (int j = 1; j <= 99; ++j) {
      const double p0 = i / 100.0, p0o = j / 100.0;  // baseline, observed group
      const auto tp = solve_monotone({p0o, 1 - p0o}, {p0, 1 - p0});
      const auto r0 = counterfactual_distribution(tp, 0);
      const auto r1 = counterfactual_distribution(tp, 1);
      const double p1 = 1 - p0, p1o = 1 - p0o;
      const double want00 = std::min(1.0, p0 / p0o), want01 = std::max(0.0, (p0o - p0) / p0o);
      const double want11 = std::min(1.0, p1 / p1o), want10 = std::max(0.0, (p1o - p1) / p1o);
      worst = std::max({worst, std::abs(r0[0] - want00), std::abs(r0[1] - want01), std::abs(r1[1] - want11),
                        std::abs(r1[0] - want10)});
    }
  }
  return {worst <= 1e-12, "9801 grid points, max deviation " + fmt(worst, 3)};
}

Outcome transport_optimality() {
  const double exponents[] = {1.5, 2.0, 3.0};
  double worst_lp = 0.0, worst_tv = 0.0, worst_l0_lp = 0.0, worst_margin = 0.0;
  for (std::uint64_t k = 0; k < 500; ++k) {
    const std::size_t m = 1 + static_cast<std::size_t>(rng::uniform(77, {k, 0}) * 5);
    std::vector<double> s(m), t(m);
    for (std::size_t i = 0; i < m; ++i) {
      s[i] = rng::uniform(77, {k, 1, i}) < 0.2 ? 0.0 : rng::uniform(77, {k, 2, i});
      t[i] = rng::uniform(77, {k, 3, i}) < 0.2 ? 0.0 : rng::uniform(77, {k, 4, i});
    }
    s[0] += 0.01;
    t[m - 1] += 0.01;
    const double ss = std::accumulate(s.begin(), s.end(), 0.0), ts = std::accumulate(t.begin(), t.end(), 0.0);
    for (auto& v : s) v /= ss;
    for (auto& v : t) v /= ts;

    const double e = exponents[k % 3];
    const auto tp = solve_monotone(s, t, e);
    const double lp = lp_oracle::transport_optimum(
        tp.source, tp.target, [&](std::size_t i, std::size_t j) { return std::pow(std::abs(double(i) - double(j)), e); });
    worst_lp = std::max(worst_lp, std::abs(plan_cost(tp) - lp));
    for (std::size_t i = 0; i < m; ++i) {
      double rs = 0, cs = 0;
      for (std::size_t j = 0; j < m; ++j) {
        rs += tp(i, j);
        cs += tp(j, i);
      }
      worst_margin = std::max({worst_margin, std::abs(rs - tp.source[i]), std::abs(cs - tp.target[i])});
    }

    const auto z = solve_zero_one(s, t);
    double off = 0.0, tv = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      tv += 0.5 * std::abs(z.source[i] - z.target[i]);
      for (std::size_t j = 0; j < m; ++j)
        if (i != j) off += z(i, j);
    }
    worst_tv = std::max(worst_tv, std::abs(off - tv));
    const double l0 = lp_oracle::transport_optimum(z.source, z.target,
                                                   [](std::size_t i, std::size_t j) { return i == j ? 0.0 : 1.0; });
    worst_l0_lp = std::max(worst_l0_lp, std::abs(l0 - tv));
  }
  const bool ok = worst_lp <= 1e-9 && worst_tv <= 1e-12 && worst_l0_lp <= 1e-9 && worst_margin <= 1e-12;
  return {ok, "500 instances: |cost - LP| <= " + fmt(worst_lp, 3) + ", |offdiag - TV| <= " + fmt(worst_tv, 3) +
                  ", |LP0 - TV| <= " + fmt(worst_l0_lp, 3) + ", marginals <= " + fmt(worst_margin, 3)};
}

Outcome appendix_b_gap() {
  ExperimentOptions o;
  o.repeats = 1;
  o.monte_carlo = 100000;
  const auto res = appendix_b_demo(o);
  const double g = res.row("optimal").mean("expected_gap");
  return {std::abs(g - 0.164) <= 0.02, "expected gap " + fmt(g) + " (target 0.164 +- 0.02)"};
}

Outcome population_fairness() {
  const auto sem = builtin("synthetic_a");
  double worst_ratio = 0.0, worst_gap = 0.0;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto tr = sem.sample(5000, 1000 + seed), te = sem.sample(5000, 2000 + seed);
    AdapterConfig cfg;
    cfg.seed = seed;
    const auto fa = fit_adapter(tr.data, sem.graph(), cfg);
    const auto& a = tr.data.column("A").values;
    for (int k = 1; k <= 5; ++k) {
      const auto ks = ks_by_group(fa.adapted_train().column("X" + std::to_string(k)).values, a);
      worst_ratio = std::max(worst_ratio, ks.statistic / ks.critical);
      ok = ok && !ks.rejects();
    }
    const auto pred = train(TrainingOption::b, fa, tr.data, fa.adapted_train(), ModelKind::logistic);
    const double gap = parity_gap(pred.predict(fa.adapt(te.data).data), te.data.column("A").values);
    worst_gap = std::max(worst_gap, std::abs(gap));
    ok = ok && std::abs(gap) < 0.05;
  }
  return {ok, "10 seeds: max KS/critical " + fmt(worst_ratio, 3) + ", max |parity gap| " + fmt(worst_gap, 3)};
}

Outcome tradeoff_trends() {
  ExperimentOptions o;
  const auto a = tradeoff_a(o);
  const auto b = tradeoff_b(o);
  bool ok = true;
  std::ostringstream d;
  for (std::size_t i = 0; i + 1 < a.rows.size(); ++i) {
    const auto& r0 = a.rows[i];
    const auto& r1 = a.rows[i + 1];
    const double gap_sd = a.pooled_sd(r0, r1, "parity_gap"), cal_sd = a.pooled_sd(r0, r1, "calibration");
    const bool g = r1.mean("parity_gap") >= r0.mean("parity_gap") - gap_sd;
    const bool c = r1.mean("calibration") <= r0.mean("calibration") + cal_sd;
    ok = ok && g && c;
    if (!g || !c) d << "break at " << r1.label << "; ";
  }
  d << "A gap " << fmt(a.rows.front().mean("parity_gap"), 3) << " -> " << fmt(a.rows.back().mean("parity_gap"), 3)
    << ", calibration " << fmt(a.rows.front().mean("calibration"), 3) << " -> "
    << fmt(a.rows.back().mean("calibration"), 3) << "; B {X1,X2} vs {X1,X2,X3}:";
  const auto& x12 = b.row("X1+X2");
  const auto& x123 = b.row("X1+X2+X3");
  for (const std::string m : {"auc", "parity_gap", "calibration"}) {
    const double diff = std::abs(x12.mean(m) - x123.mean(m)), sd = b.pooled_sd(x12, x123, m);
    ok = ok && diff <= sd;
    d << " " << m << " diff " << fmt(diff, 2) << "/sd " << fmt(sd, 2);
  }
  return {ok, d.str()};
}

// Fits a least-squares predictor on exactly adapted chain data, then recovers
// the coefficients of the composite predictor on (A, X1, X2) by a second
// regression and evaluates alpha_A + sum_j alpha_j * c_j.
double linear_constraint_residual(const std::set<std::string>& resolving) {
  const auto sem = builtin("chain_example");
  const auto s = sem.sample(10000, 404);
  const auto ft = sem.oracle_adapt(s, resolving, 0.0);
  const std::vector<std::string> xs{"X1", "X2"};
  Matrix F(ft.rows(), 2), Z(ft.rows(), 3);
  for (std::size_t i = 0; i < ft.rows(); ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      F(i, j) = ft.column(xs[j]).values[i];
      Z(i, j + 1) = s.data.column(xs[j]).values[i];
    }
    Z(i, 0) = s.data.column("A").values[i];
  }
  const auto f = fit_linear(F, ft.column("Y").values);
  std::vector<double> composite(ft.rows());
  for (std::size_t i = 0; i < ft.rows(); ++i) composite[i] = f.predict(F.row(i));
  const auto alpha = fit_linear(Z, composite);
  double r = alpha.coef[0];
  const auto betas = sem.edge_coefficients();
  for (std::size_t j = 0; j < 2; ++j) r += alpha.coef[j + 1] * path_coefficient_sum(sem.graph(), betas, xs[j], resolving);
  return r;
}

Outcome linear_constraint() {
  const double r0 = linear_constraint_residual({});
  const double r1 = linear_constraint_residual({"X1"});
  return {std::abs(r0) < 0.05 && std::abs(r1) < 0.05,
          "residual " + fmt(r0, 3) + " (R empty), " + fmt(r1, 3) + " (R = {X1})"};
}

// Criterion 8 fixes n = 1e5; a single seed, since the adapter's own sampling
// error (the only source of a nonzero NDE) shrinks as 1/sqrt(n).
Outcome natural_direct_effect() {
  ExperimentOptions o;
  o.repeats = 1;
  o.n_train = 100000;
  o.monte_carlo = 100000;
  o.seed = 808;
  const auto res = ripg_demo(o);
  const double ad = res.row("adapted").values.at("nde")[0];
  const double un = res.row("unadapted").values.at("nde")[0];
  return {std::abs(ad) < 0.03 && std::abs(un) > 0.1,
          "n = 1e5: NDE adapted " + fmt(ad, 3) + ", unadapted " + fmt(un, 3)};
}

// ripg_example at n = 20000 training rows, the size used for its other checks.
Outcome resolver_gap() {
  ExperimentOptions o;
  o.repeats = 10;
  o.n_train = 20000;
  o.monte_carlo = 100000;
  o.seed = 909;
  const auto res = ripg_demo(o);
  const auto& row = res.row("adapted");
  double worst = -INFINITY;
  for (std::size_t r = 0; r < row.values.at("expected_gap").size(); ++r)
    worst = std::max(worst, row.values.at("expected_gap")[r] - row.values.at("ripg_bound")[r]);
  return {worst <= 0.03, "10 seeds: max (gap - bound) " + fmt(worst, 3) + ", mean bound " +
                             fmt(row.mean("ripg_bound"), 3) + ", unadapted mean gap " +
                             fmt(res.row("unadapted").mean("expected_gap"), 3)};
}

Outcome oracle_agreement() {
  const auto sem = builtin("synthetic_a");
  const auto s = sem.sample(10000, 505);
  AdapterConfig cfg;
  cfg.seed = 17;
  const auto fa = fit_adapter(s.data, sem.graph(), cfg);
  const auto oracle = sem.oracle_adapt(s, {}, 0.0);
  const auto& a = s.data.column("A").values;
  double worst = 0.0;
  std::string per;
  for (int k = 1; k <= 5; ++k) {
    const auto name = "X" + std::to_string(k);
    std::vector<double> dev;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] == 1.0)
        dev.push_back(std::abs(fa.adapted_train().column(name).values[i] - oracle.column(name).values[i]));
    std::nth_element(dev.begin(), dev.begin() + static_cast<std::ptrdiff_t>(dev.size() / 2), dev.end());
    const double mad = dev[dev.size() / 2];
    worst = std::max(worst, mad);
    per += " " + fmt(mad, 3);
  }
  return {worst < 0.1, "median |estimated - exact| per X_i:" + per};
}

Outcome property_suites() {
  bool ok = true;
  std::string failed;
  std::size_t n = 0;
  for (auto check : props::all()) {
    const auto c = check();
    ++n;
    if (!c.ok) {
      ok = false;
      failed += " [" + c.name + ": " + c.detail + "]";
    }
  }
  return {ok, ok ? std::to_string(n) + " property checks green" : "failed:" + failed};
}

}  // namespace

// Optional arguments pick criteria by number; no arguments runs all of them.
int main(int argc, char** argv) {
  std::vector<std::size_t> only;
  for (int k = 1; k < argc; ++k) only.push_back(std::stoul(argv[k]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"transport worked example", transport_example},
      {"binary rule equivalence", binary_rule},
      {"transport optimality vs LP oracle", transport_optimality},
      {"appendix_b expected gap", appendix_b_gap},
      {"population fairness on synthetic_a", population_fairness},
      {"trade-off trends", tradeoff_trends},
      {"linear constraint residual", linear_constraint},
      {"natural direct effect", natural_direct_effect},
      {"resolver-induced gap bound", resolver_gap},
      {"oracle agreement", oracle_agreement},
      {"property suites", property_suites},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && std::find(only.begin(), only.end(), i + 1) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.ok;
    std::cout << (o.ok ? "PASS" : "FAIL") << " criterion " << (i + 1) << " " << criteria[i].first << ": "
              << o.detail << " [" << fmt(secs, 3) << "s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
