#pragma once

#include "evolunet/bound.hpp"
#include "evolunet/config.hpp"
#include "evolunet/dataset_io.hpp"
#include "evolunet/discrepancy.hpp"
#include "evolunet/graph.hpp"
#include "evolunet/model.hpp"
#include "evolunet/nn/checkpoint.hpp"
#include "evolunet/nn/grad_check.hpp"
#include "evolunet/nn/layers.hpp"
#include "evolunet/nn/optim.hpp"
#include "evolunet/nn/tensor.hpp"
#include "evolunet/rng.hpp"
#include "evolunet/sbm.hpp"
#include "evolunet/spectral.hpp"
#include "evolunet/train.hpp"
#include "evolunet/transport.hpp"
#include "evolunet/wl.hpp"
