#pragma once

#include "qmeas/bipartite.hpp"
#include "qmeas/errors.hpp"
#include "qmeas/expr.hpp"
#include "qmeas/fourier.hpp"
#include "qmeas/grid.hpp"
#include "qmeas/hydro.hpp"
#include "qmeas/integral_op.hpp"
#include "qmeas/io.hpp"
#include "qmeas/measurement.hpp"
#include "qmeas/polar.hpp"
#include "qmeas/presets.hpp"
#include "qmeas/rng.hpp"
#include "qmeas/runner.hpp"
#include "qmeas/scenario.hpp"
#include "qmeas/tdse.hpp"
#include "qmeas/trajectories.hpp"
#include "qmeas/wavefunction.hpp"
