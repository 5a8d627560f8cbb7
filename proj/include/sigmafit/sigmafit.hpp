// Umbrella header.

#pragma once

#include "distributions.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "ransac.hpp"
#include "rng.hpp"
#include "scale.hpp"
#include "solvers.hpp"
#include "synthetic.hpp"
