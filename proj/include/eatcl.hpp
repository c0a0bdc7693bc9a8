#pragma once

#include "eatcl/errors.hpp"
#include "eatcl/rng.hpp"
#include "eatcl/matrix.hpp"
#include "eatcl/mlp.hpp"
#include "eatcl/attacks.hpp"
#include "eatcl/data.hpp"
#include "eatcl/memory.hpp"
#include "eatcl/eval.hpp"
#include "eatcl/strategies.hpp"
#include "eatcl/config.hpp"
#include "eatcl/runner.hpp"
