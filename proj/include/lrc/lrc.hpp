#pragma once

#include "lrc/baseline_als.hpp"
#include "lrc/cg_solver.hpp"
#include "lrc/common.hpp"
#include "lrc/experiments.hpp"
#include "lrc/io.hpp"
#include "lrc/manifold.hpp"
#include "lrc/metrics.hpp"
#include "lrc/objective.hpp"
#include "lrc/problems.hpp"
#include "lrc/rng.hpp"
#include "lrc/sampling.hpp"
