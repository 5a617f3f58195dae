#pragma once

// Umbrella header for the whole library.

#include "qht/covest.hpp"
#include "qht/harness/analysis.hpp"
#include "qht/harness/experiment.hpp"
#include "qht/harness/results.hpp"
#include "qht/harness/runner.hpp"
#include "qht/lowrank.hpp"
#include "qht/quantize.hpp"
#include "qht/randgen.hpp"
#include "qht/rng.hpp"
#include "qht/sparse/l1_ball.hpp"
#include "qht/sparse/solvers.hpp"
#include "qht/sparse/surrogates.hpp"
