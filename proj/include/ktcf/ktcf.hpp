#pragma once

#include "ktcf/adam.hpp"
#include "ktcf/cf_engine.hpp"
#include "ktcf/data_io.hpp"
#include "ktcf/error.hpp"
#include "ktcf/eval.hpp"
#include "ktcf/kc_graph.hpp"
#include "ktcf/kt_model.hpp"
#include "ktcf/planner.hpp"
#include "ktcf/random.hpp"
#include "ktcf/trainer.hpp"
