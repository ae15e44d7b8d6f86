// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

#pragma once

#include "camforge/calibration.hpp"
#include "camforge/cond/check.hpp"
#include "camforge/cond/gradcheck.hpp"
#include "camforge/cond/params.hpp"
#include "camforge/cond/probe.hpp"
#include "camforge/cond/stack.hpp"
#include "camforge/dataset.hpp"
#include "camforge/directive.hpp"
#include "camforge/error.hpp"
#include "camforge/image.hpp"
#include "camforge/json_io.hpp"
#include "camforge/lut.hpp"
#include "camforge/metrics.hpp"
#include "camforge/pipeline.hpp"
#include "camforge/png_io.hpp"
#include "camforge/service.hpp"
#include "camforge/transforms.hpp"
