#pragma once

#include "simcal/checkpoint.hpp"
#include "simcal/csv.hpp"
#include "simcal/density.hpp"
#include "simcal/inference.hpp"
#include "simcal/math.hpp"
#include "simcal/mixture.hpp"
#include "simcal/param_space.hpp"
#include "simcal/pipeline.hpp"
#include "simcal/random.hpp"
#include "simcal/run_config.hpp"
#include "simcal/signature.hpp"
#include "simcal/simulators.hpp"
#include "simcal/standardizer.hpp"
#include "simcal/summarizers.hpp"
#include "simcal/trajectory.hpp"
