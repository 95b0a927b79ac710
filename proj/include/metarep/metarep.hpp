#pragma once

#include "metarep/error.hpp"
#include "metarep/rng.hpp"
#include "metarep/linalg.hpp"
#include "metarep/datagen.hpp"
#include "metarep/interpolator.hpp"
#include "metarep/risk.hpp"
#include "metarep/optrep.hpp"
#include "metarep/estimators.hpp"
#include "metarep/io.hpp"
#include "metarep/experiments.hpp"
