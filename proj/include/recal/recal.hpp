#pragma once

#include "recal/errors.hpp"
#include "recal/scoring.hpp"
#include "recal/distribution.hpp"
#include "recal/geometry.hpp"
#include "recal/rng.hpp"
#include "recal/recalibrator.hpp"
#include "recal/mw_recalibrator.hpp"
#include "recal/metrics.hpp"
#include "recal/harness.hpp"
#include "recal/sweep.hpp"
#include "recal/verify.hpp"
#include "recal/io.hpp"
