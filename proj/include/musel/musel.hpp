#pragma once

#include <musel/core_model.hpp>
#include <musel/csv.hpp>
#include <musel/estimators.hpp>
#include <musel/lp.hpp>
#include <musel/matrix.hpp>
#include <musel/missing_data.hpp>
#include <musel/random.hpp>
#include <musel/sensitivities.hpp>
#include <musel/sim.hpp>
#include <musel/thresholds.hpp>
