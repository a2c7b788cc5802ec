#pragma once

#include "ptaloc/beamforming.hpp"
#include "ptaloc/channel.hpp"
#include "ptaloc/config_io.hpp"
#include "ptaloc/deployment.hpp"
#include "ptaloc/errors.hpp"
#include "ptaloc/estimation.hpp"
#include "ptaloc/fusion.hpp"
#include "ptaloc/geometry.hpp"
#include "ptaloc/harness/bench.hpp"
#include "ptaloc/harness/dataset.hpp"
#include "ptaloc/harness/experiment.hpp"
#include "ptaloc/harness/heatmap.hpp"
#include "ptaloc/harness/learning.hpp"
#include "ptaloc/harness/metrics.hpp"
#include "ptaloc/harness/report.hpp"
#include "ptaloc/harness/sweep.hpp"
#include "ptaloc/harness/trial.hpp"
#include "ptaloc/nn/fusers.hpp"
#include "ptaloc/random.hpp"
#include "ptaloc/scenario.hpp"
