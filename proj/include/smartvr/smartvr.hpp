#pragma once

#include "smartvr/errors.hpp"
#include "smartvr/domain.hpp"
#include "smartvr/featurize.hpp"
#include "smartvr/rasch.hpp"
#include "smartvr/nn.hpp"
#include "smartvr/deep_irt.hpp"
#include "smartvr/synth.hpp"
#include "smartvr/dataio.hpp"
#include "smartvr/evalharness.hpp"
#include "smartvr/report.hpp"
