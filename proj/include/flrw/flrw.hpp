#pragma once

#include "flrw/error.hpp"
#include "flrw/parallel.hpp"
#include "flrw/background.hpp"
#include "flrw/grid.hpp"
#include "flrw/state.hpp"
#include "flrw/constraints.hpp"
#include "flrw/initial_data.hpp"
#include "flrw/evolution.hpp"
#include "flrw/diagnostics.hpp"
#include "flrw/config.hpp"
#include "flrw/harness.hpp"
