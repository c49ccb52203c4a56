#pragma once

#include "ccat/data/embedding.hpp"
#include "ccat/data/kennard_stone.hpp"
#include "ccat/data/manifest.hpp"
#include "ccat/data/split.hpp"
#include "ccat/error.hpp"
#include "ccat/frontend/cache.hpp"
#include "ccat/frontend/context.hpp"
#include "ccat/frontend/features.hpp"
#include "ccat/frontend/wav.hpp"
#include "ccat/metrics/metrics.hpp"
#include "ccat/metrics/monotonic_cubic.hpp"
#include "ccat/metrics/report.hpp"
#include "ccat/model/checkpoint.hpp"
#include "ccat/model/config.hpp"
#include "ccat/model/network.hpp"
#include "ccat/nn/attention.hpp"
#include "ccat/nn/grad_check.hpp"
#include "ccat/nn/ops.hpp"
#include "ccat/nn/tape.hpp"
#include "ccat/training/adam.hpp"
#include "ccat/training/batching.hpp"
#include "ccat/training/fit.hpp"
#include "ccat/training/loss.hpp"
#include "ccat/tuning/ensemble.hpp"
#include "ccat/tuning/search.hpp"
