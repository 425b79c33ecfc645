#pragma once

// Umbrella header.
#include "rwsgd/core.hpp"
#include "rwsgd/models.hpp"
#include "rwsgd/random.hpp"
#include "rwsgd/plugin.hpp"
#include "rwsgd/engine.hpp"
#include "rwsgd/inference.hpp"
#include "rwsgd/checkpoint.hpp"
#include "rwsgd/simulate.hpp"
#include "rwsgd/ingest.hpp"
