#pragma once

#include "loadlens/common.hpp"
#include "loadlens/dataset.hpp"
#include "loadlens/decomposition.hpp"
#include "loadlens/errors.hpp"
#include "loadlens/features.hpp"
#include "loadlens/interpret.hpp"
#include "loadlens/metrics.hpp"
#include "loadlens/model.hpp"
#include "loadlens/nn/autograd.hpp"
#include "loadlens/nn/optimizer.hpp"
#include "loadlens/pipeline.hpp"
#include "loadlens/similarity.hpp"
