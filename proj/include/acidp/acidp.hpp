#pragma once

// Umbrella header for the ACIDP dynamic-pricing engine.

#include "acidp/audit.hpp"
#include "acidp/core.hpp"
#include "acidp/environments.hpp"
#include "acidp/harness.hpp"
#include "acidp/ids.hpp"
#include "acidp/policies.hpp"
#include "acidp/rng.hpp"
#include "acidp/stats.hpp"
#include "acidp/universes.hpp"
