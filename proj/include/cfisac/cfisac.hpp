#pragma once

// Everything except the CLI command layer (cfisac/commands.hpp).
#include "cfisac/config.hpp"
#include "cfisac/rng.hpp"
#include "cfisac/scenario.hpp"
#include "cfisac/metrics.hpp"
#include "cfisac/cone_program.hpp"
#include "cfisac/socp_solver.hpp"
#include "cfisac/relaxed_problem.hpp"
#include "cfisac/selector.hpp"
#include "cfisac/baselines.hpp"
#include "cfisac/parallel.hpp"
#include "cfisac/dataset.hpp"
