#pragma once

#include "synnet/data.hpp"
#include "synnet/error.hpp"
#include "synnet/layers.hpp"
#include "synnet/loss.hpp"
#include "synnet/metrics.hpp"
#include "synnet/model.hpp"
#include "synnet/optim.hpp"
#include "synnet/params.hpp"
#include "synnet/persist.hpp"
#include "synnet/tensor.hpp"
#include "synnet/verify.hpp"
