#pragma once

#include "gapsroute/baselines.hpp"
#include "gapsroute/experiment.hpp"
#include "gapsroute/policy.hpp"
#include "gapsroute/routers.hpp"
#include "gapsroute/shortest_paths.hpp"
#include "gapsroute/simulator.hpp"
#include "gapsroute/topology.hpp"
