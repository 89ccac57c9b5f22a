#pragma once

#include "crtbayes/error.hpp"
#include "crtbayes/rng.hpp"
#include "crtbayes/stats.hpp"
#include "crtbayes/parallel.hpp"
#include "crtbayes/trial_data.hpp"
#include "crtbayes/lmm_gibbs.hpp"
#include "crtbayes/estimands.hpp"
#include "crtbayes/calibration.hpp"
#include "crtbayes/dgp.hpp"
#include "crtbayes/metrics.hpp"
#include "crtbayes/simulation.hpp"
