// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include "mbkt/autodiff.hpp"
#include "mbkt/checkpoint.hpp"
#include "mbkt/data.hpp"
#include "mbkt/errors.hpp"
#include "mbkt/fusion.hpp"
#include "mbkt/gradcheck.hpp"
#include "mbkt/losses.hpp"
#include "mbkt/metrics.hpp"
#include "mbkt/model.hpp"
#include "mbkt/nn.hpp"
#include "mbkt/optim.hpp"
#include "mbkt/rng.hpp"
#include "mbkt/tensor.hpp"
#include "mbkt/train.hpp"
#include "mbkt/transfer.hpp"
#include "mbkt/types.hpp"
