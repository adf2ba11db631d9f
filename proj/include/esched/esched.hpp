#pragma once

#include "esched/bench.hpp"
#include "esched/dag.hpp"
#include "esched/daggen.hpp"
#include "esched/exec.hpp"
#include "esched/kernels.hpp"
#include "esched/ptt.hpp"
#include "esched/rng.hpp"
#include "esched/sched.hpp"
#include "esched/simcore.hpp"
#include "esched/topology.hpp"
#include "esched/trace.hpp"
