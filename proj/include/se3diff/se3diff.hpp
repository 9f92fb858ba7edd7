#pragma once

#include "se3diff/backbone.hpp"
#include "se3diff/errors.hpp"
#include "se3diff/igso3.hpp"
#include "se3diff/lie_so3.hpp"
#include "se3diff/schedules.hpp"
#include "se3diff/se3_process.hpp"
#include "se3diff/stats.hpp"
#include "se3diff/toy_targets.hpp"
