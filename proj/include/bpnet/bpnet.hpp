#pragma once

#include "bpnet/array_io.hpp"
#include "bpnet/autograd.hpp"
#include "bpnet/baselines.hpp"
#include "bpnet/checkpoint.hpp"
#include "bpnet/config.hpp"
#include "bpnet/cross_attention.hpp"
#include "bpnet/data.hpp"
#include "bpnet/encoder.hpp"
#include "bpnet/error.hpp"
#include "bpnet/matcher.hpp"
#include "bpnet/metrics.hpp"
#include "bpnet/model.hpp"
#include "bpnet/parameters.hpp"
#include "bpnet/proposal.hpp"
#include "bpnet/training.hpp"
