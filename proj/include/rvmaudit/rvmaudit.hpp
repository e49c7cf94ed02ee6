#pragma once

#include "rvmaudit/audit.hpp"
#include "rvmaudit/checkpoint.hpp"
#include "rvmaudit/color.hpp"
#include "rvmaudit/config.hpp"
#include "rvmaudit/image.hpp"
#include "rvmaudit/manifest.hpp"
#include "rvmaudit/metrics.hpp"
#include "rvmaudit/model.hpp"
#include "rvmaudit/pixel_stats.hpp"
#include "rvmaudit/pnm.hpp"
#include "rvmaudit/rng.hpp"
#include "rvmaudit/skeleton.hpp"
#include "rvmaudit/split.hpp"
#include "rvmaudit/svg.hpp"
#include "rvmaudit/synth.hpp"
#include "rvmaudit/train.hpp"
#include "rvmaudit/transforms.hpp"
#include "rvmaudit/welch.hpp"
