#pragma once

#include "ppgnn/csr.hpp"
#include "ppgnn/dataset.hpp"
#include "ppgnn/error.hpp"
#include "ppgnn/experiments.hpp"
#include "ppgnn/graph_learner.hpp"
#include "ppgnn/init.hpp"
#include "ppgnn/message_passing.hpp"
#include "ppgnn/rng.hpp"
#include "ppgnn/svg_plot.hpp"
#include "ppgnn/training.hpp"
