#pragma once

#include "stratfx/error.hpp"
#include "stratfx/rng.hpp"
#include "stratfx/normal.hpp"
#include "stratfx/parallel.hpp"
#include "stratfx/sample.hpp"
#include "stratfx/kernel.hpp"
#include "stratfx/estimators.hpp"
#include "stratfx/variance.hpp"
#include "stratfx/inference.hpp"
#include "stratfx/scope.hpp"
#include "stratfx/design.hpp"
#include "stratfx/dgp.hpp"
