#pragma once

// Umbrella header: heterogeneous treatment-effect estimation with honest
// gradient forests, semi-parametric network nuisances, cross-fitted average
// effects, synthetic benchmarks and pricing policy evaluation.

#include "orthoforest/config.hpp"
#include "orthoforest/dataset.hpp"
#include "orthoforest/dml.hpp"
#include "orthoforest/errors.hpp"
#include "orthoforest/forest.hpp"
#include "orthoforest/linear.hpp"
#include "orthoforest/network.hpp"
#include "orthoforest/nuisance.hpp"
#include "orthoforest/policy.hpp"
#include "orthoforest/rng.hpp"
#include "orthoforest/serialize.hpp"
#include "orthoforest/synthetic.hpp"
#include "orthoforest/threading.hpp"
#include "orthoforest/tree.hpp"
#include "orthoforest/version.hpp"
