#pragma once

#include "nbar/asymmetry_test.hpp"
#include "nbar/diagnostics.hpp"
#include "nbar/errors.hpp"
#include "nbar/estimators.hpp"
#include "nbar/experiments.hpp"
#include "nbar/kernel.hpp"
#include "nbar/model.hpp"
#include "nbar/parallel.hpp"
#include "nbar/random.hpp"
#include "nbar/simulate.hpp"
#include "nbar/special_functions.hpp"
#include "nbar/tree.hpp"
