#pragma once

#include "addinfer/backfit.hpp"
#include "addinfer/bandwidth.hpp"
#include "addinfer/bootstrap.hpp"
#include "addinfer/data.hpp"
#include "addinfer/design.hpp"
#include "addinfer/errors.hpp"
#include "addinfer/inference.hpp"
#include "addinfer/io.hpp"
#include "addinfer/kernel.hpp"
#include "addinfer/parallel.hpp"
#include "addinfer/quadrature.hpp"
#include "addinfer/rng.hpp"
#include "addinfer/simulate.hpp"
#include "addinfer/smoother.hpp"
