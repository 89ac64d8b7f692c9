#pragma once

#include "flightcast/baselines.hpp"
#include "flightcast/commands.hpp"
#include "flightcast/datagen.hpp"
#include "flightcast/error.hpp"
#include "flightcast/eval.hpp"
#include "flightcast/forecaster.hpp"
#include "flightcast/layers.hpp"
#include "flightcast/model_file.hpp"
#include "flightcast/models.hpp"
#include "flightcast/pipeline.hpp"
#include "flightcast/random.hpp"
#include "flightcast/run_config.hpp"
#include "flightcast/tensor.hpp"
