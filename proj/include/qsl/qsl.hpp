#pragma once

// Umbrella header: the whole library.

#include "qsl/dual.hpp"
#include "qsl/error.hpp"
#include "qsl/evolution.hpp"
#include "qsl/field.hpp"
#include "qsl/field_io.hpp"
#include "qsl/functionals.hpp"
#include "qsl/grid.hpp"
#include "qsl/ground_state.hpp"
#include "qsl/lab.hpp"
#include "qsl/linalg.hpp"
#include "qsl/mass_constrained.hpp"
#include "qsl/params.hpp"
