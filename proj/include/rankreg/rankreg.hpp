#pragma once

#include "rankreg/csv.hpp"
#include "rankreg/data_model.hpp"
#include "rankreg/estimators.hpp"
#include "rankreg/gehan_ranks.hpp"
#include "rankreg/lad_solver.hpp"
#include "rankreg/parallel.hpp"
#include "rankreg/rng.hpp"
#include "rankreg/simgen.hpp"
#include "rankreg/variance.hpp"
