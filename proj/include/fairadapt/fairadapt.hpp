#pragma once

// Umbrella header for the library (the CLI layer lives in commands.hpp).

#include "fairadapt/causal_graph.hpp"
#include "fairadapt/discrete_transport.hpp"
#include "fairadapt/error.hpp"
#include "fairadapt/experiments.hpp"
#include "fairadapt/fair_adapter.hpp"
#include "fairadapt/fairness_metrics.hpp"
#include "fairadapt/forest.hpp"
#include "fairadapt/predictors.hpp"
#include "fairadapt/preprocess.hpp"
#include "fairadapt/sem_lab.hpp"
#include "fairadapt/tabular_data.hpp"
