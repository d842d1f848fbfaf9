#pragma once

#include "malkit/common.hpp"
#include "malkit/dataset.hpp"
#include "malkit/evaluation.hpp"
#include "malkit/gbm.hpp"
#include "malkit/metrics.hpp"
#include "malkit/osnn.hpp"
#include "malkit/osr.hpp"
#include "malkit/permissions.hpp"
#include "malkit/synthetic.hpp"
