#pragma once

#include "lungdet/anchors.hpp"
#include "lungdet/errors.hpp"
#include "lungdet/formats.hpp"
#include "lungdet/geometry.hpp"
#include "lungdet/metrics.hpp"
#include "lungdet/nms.hpp"
#include "lungdet/preprocess.hpp"
#include "lungdet/roipool.hpp"
