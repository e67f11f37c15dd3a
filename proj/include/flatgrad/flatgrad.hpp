#pragma once

#include "flatgrad/ablation.hpp"
#include "flatgrad/config_json.hpp"
#include "flatgrad/dataset_io.hpp"
#include "flatgrad/datasets.hpp"
#include "flatgrad/diagnostics.hpp"
#include "flatgrad/experiment.hpp"
#include "flatgrad/flip.hpp"
#include "flatgrad/mlp.hpp"
#include "flatgrad/noise.hpp"
#include "flatgrad/optimizer.hpp"
#include "flatgrad/parameter_set.hpp"
#include "flatgrad/rng.hpp"
#include "flatgrad/svg_plot.hpp"
#include "flatgrad/tensor.hpp"
