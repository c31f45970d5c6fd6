// Simulate Synthetic A, adapt with X1 resolving, fit a logistic model on the
// adapted data and report fairness on a fresh test draw.

#include <iostream>

#include "fairadapt/fairadapt.hpp"

int main() {
  using namespace fairadapt;
  const auto sem = builtin("synthetic_a");
  const auto train_s = sem.sample(2000, 1);
  const auto test_s = sem.sample(2000, 2);

  const auto graph = sem.graph().with_resolving({"X1"});
  AdapterConfig cfg;
  cfg.seed = 42;
  const auto adapter = fit_adapter(train_s.data, graph, cfg);
  const auto adapted_test = adapter.adapt(test_s.data).data;

  const auto model = train(TrainingOption::b, adapter, train_s.data, adapter.adapted_train(), ModelKind::logistic);
  const auto p = model.predict(adapted_test);
  const auto report = evaluate(p, test_s.data.column("Y").values, test_s.data.column("A").values);
  std::cout << report.to_json().dump(2) << "\n";

  for (const auto& x : {"X1", "X2"}) {
    const auto ks = ks_by_group(adapter.adapted_train().column(x).values, train_s.data.column("A").values);
    std::cout << x << ": KS between groups after adaptation " << ks.statistic << " (critical " << ks.critical << ")\n";
  }
}
