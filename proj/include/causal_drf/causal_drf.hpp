#pragma once

#include "causal_drf/config.hpp"
#include "causal_drf/dataset.hpp"
#include "causal_drf/error.hpp"
#include "causal_drf/forest.hpp"
#include "causal_drf/inference.hpp"
#include "causal_drf/io.hpp"
#include "causal_drf/kernel.hpp"
#include "causal_drf/parallel.hpp"
#include "causal_drf/rng.hpp"
#include "causal_drf/simulation.hpp"
#include "causal_drf/tree.hpp"
