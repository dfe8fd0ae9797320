#pragma once

#include "ovm/core.hpp"
#include "ovm/decompose.hpp"
#include "ovm/diagnostics.hpp"
#include "ovm/harness.hpp"
#include "ovm/learner.hpp"
#include "ovm/mapping.hpp"
#include "ovm/mdp.hpp"
#include "ovm/record.hpp"
#include "ovm/schedule.hpp"
