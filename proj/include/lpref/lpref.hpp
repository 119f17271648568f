#pragma once

// Umbrella include for the whole library.

#include "lpref/core/autograd.hpp"
#include "lpref/core/errors.hpp"
#include "lpref/core/finite_diff.hpp"
#include "lpref/core/ops.hpp"
#include "lpref/core/optim.hpp"
#include "lpref/core/rng.hpp"
#include "lpref/core/tensor.hpp"
#include "lpref/diffusion/ddim.hpp"
#include "lpref/diffusion/flow.hpp"
#include "lpref/diffusion/sampler.hpp"
#include "lpref/diffusion/schedule.hpp"
#include "lpref/harness/binio.hpp"
#include "lpref/harness/checkpoint.hpp"
#include "lpref/harness/config.hpp"
#include "lpref/harness/dataset.hpp"
#include "lpref/harness/eval.hpp"
#include "lpref/harness/metrics.hpp"
#include "lpref/harness/model_io.hpp"
#include "lpref/harness/synthetic.hpp"
#include "lpref/lpo/losses.hpp"
#include "lpref/lpo/pairing.hpp"
#include "lpref/lpo/threshold.hpp"
#include "lpref/lpo/trainers.hpp"
#include "lpref/mpcf/metrics.hpp"
#include "lpref/mpcf/mpcf.hpp"
#include "lpref/mpcf/oracles.hpp"
#include "lpref/nn/denoiser.hpp"
#include "lpref/nn/embedding.hpp"
#include "lpref/nn/encoder.hpp"
#include "lpref/nn/pretrain.hpp"
#include "lpref/reward/bt.hpp"
#include "lpref/reward/lrm.hpp"
