#pragma once

#include "quelab/concentration.hpp"
#include "quelab/errors.hpp"
#include "quelab/fd.hpp"
#include "quelab/geometry.hpp"
#include "quelab/haar.hpp"
#include "quelab/harness.hpp"
#include "quelab/heat.hpp"
#include "quelab/linalg.hpp"
#include "quelab/observables.hpp"
#include "quelab/operator.hpp"
#include "quelab/parallel.hpp"
#include "quelab/partition.hpp"
#include "quelab/quadrature.hpp"
#include "quelab/rng.hpp"
#include "quelab/spectrum.hpp"
#include "quelab/stats.hpp"
