#pragma once

#include "rfslam/slam/association.hpp"
#include "rfslam/slam/belief.hpp"
#include "rfslam/slam/engine.hpp"
#include "rfslam/slam/params.hpp"
