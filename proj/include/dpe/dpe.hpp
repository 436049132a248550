#pragma once

// Umbrella header for the whole toolkit.

#include "dpe/common.hpp"
#include "dpe/config.hpp"
#include "dpe/csv.hpp"
#include "dpe/dynamic.hpp"
#include "dpe/ensemble.hpp"
#include "dpe/experiment.hpp"
#include "dpe/hpo.hpp"
#include "dpe/machines.hpp"
#include "dpe/metrics.hpp"
#include "dpe/series.hpp"
#include "dpe/sweeps.hpp"
#include "dpe/synthetic.hpp"
