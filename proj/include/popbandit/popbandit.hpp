#pragma once

#include "acquisition.hpp"
#include "bandit.hpp"
#include "gp.hpp"
#include "harness.hpp"
#include "space.hpp"
#include "strategies.hpp"
