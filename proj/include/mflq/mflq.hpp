#pragma once

#include "mflq/core.hpp"
#include "mflq/schedule.hpp"
#include "mflq/problem.hpp"
#include "mflq/riccati.hpp"
#include "mflq/feedback.hpp"
#include "mflq/moments.hpp"
#include "mflq/rng.hpp"
#include "mflq/mcsim.hpp"
#include "mflq/scalar.hpp"
#include "mflq/instances.hpp"
#include "mflq/io.hpp"
