#pragma once

#include "acquisition.hpp"
#include "data.hpp"
#include "external.hpp"
#include "harness.hpp"
#include "kmeans.hpp"
#include "loop.hpp"
#include "metrics.hpp"
#include "predictor.hpp"
#include "preprocess.hpp"
#include "stats.hpp"
