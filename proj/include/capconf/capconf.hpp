#pragma once

// Umbrella header: the full public surface of the capconf library.

#include "capconf/conformal.hpp"
#include "capconf/errors.hpp"
#include "capconf/harness.hpp"
#include "capconf/io.hpp"
#include "capconf/knn.hpp"
#include "capconf/metrics.hpp"
#include "capconf/numfmt.hpp"
#include "capconf/parallel.hpp"
#include "capconf/rng.hpp"
#include "capconf/synth.hpp"
#include "capconf/types.hpp"
#include "capconf/zeroshot.hpp"
