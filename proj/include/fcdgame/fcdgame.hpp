#pragma once

#include "fcdgame/analysis.hpp"
#include "fcdgame/commands.hpp"
#include "fcdgame/model.hpp"
#include "fcdgame/obfuscation.hpp"
#include "fcdgame/oracle.hpp"
#include "fcdgame/scenario_io.hpp"
#include "fcdgame/sim.hpp"
#include "fcdgame/solver.hpp"
#include "fcdgame/validation.hpp"
