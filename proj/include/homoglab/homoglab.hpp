#pragma once

// Umbrella header.

#include "homoglab/error.hpp"
#include "homoglab/field.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/operator.hpp"
#include "homoglab/krylov.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/parallel.hpp"
#include "homoglab/corrector.hpp"
#include "homoglab/homogenize.hpp"
#include "homoglab/bvp.hpp"
#include "homoglab/probes.hpp"
#include "homoglab/campanato.hpp"
#include "homoglab/expr.hpp"
#include "homoglab/config.hpp"
#include "homoglab/cli.hpp"
