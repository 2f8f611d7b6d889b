#pragma once

#include "toda/errors.hpp"
#include "toda/matrix.hpp"
#include "toda/system.hpp"
#include "toda/dressing.hpp"
#include "toda/solitons.hpp"
#include "toda/harness.hpp"
#include "toda/config.hpp"
#include "toda/cli.hpp"
