#pragma once

#include "gazehta/convert.hpp"
#include "gazehta/core.hpp"
#include "gazehta/data.hpp"
#include "gazehta/gtgen.hpp"
#include "gazehta/harness.hpp"
#include "gazehta/losses.hpp"
#include "gazehta/matching.hpp"
#include "gazehta/metrics.hpp"
#include "gazehta/model.hpp"
#include "gazehta/nn.hpp"
#include "gazehta/postprocess.hpp"
#include "gazehta/rng.hpp"
#include "gazehta/visualize.hpp"
