#pragma once

#include "reconf/ageing.hpp"
#include "reconf/commands.hpp"
#include "reconf/config.hpp"
#include "reconf/csv.hpp"
#include "reconf/electrics.hpp"
#include "reconf/engine.hpp"
#include "reconf/errors.hpp"
#include "reconf/fpu.hpp"
#include "reconf/rng.hpp"
#include "reconf/roots.hpp"
#include "reconf/rpu.hpp"
