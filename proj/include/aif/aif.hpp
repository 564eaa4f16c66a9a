#pragma once

#include "aif/agent/agent.hpp"
#include "aif/agent/budget.hpp"
#include "aif/agent/memory.hpp"
#include "aif/agent/plateau.hpp"
#include "aif/agent/preference_stack.hpp"
#include "aif/core/categorical.hpp"
#include "aif/core/expected_free_energy.hpp"
#include "aif/core/free_energy.hpp"
#include "aif/core/generative_model.hpp"
#include "aif/core/narrative.hpp"
#include "aif/core/random.hpp"
#include "aif/core/serialization.hpp"
#include "aif/errors.hpp"
#include "aif/hierarchy/bus.hpp"
#include "aif/hierarchy/clustering.hpp"
#include "aif/hierarchy/coordination.hpp"
#include "aif/hierarchy/evolution.hpp"
#include "aif/hierarchy/hierarchy.hpp"
#include "aif/hierarchy/reputation.hpp"
#include "aif/hierarchy/topology.hpp"
#include "aif/reasoning/consensus.hpp"
#include "aif/reasoning/external_provider.hpp"
#include "aif/reasoning/provider.hpp"
#include "aif/reasoning/tabular_provider.hpp"
#include "aif/runtime/audit.hpp"
#include "aif/runtime/config.hpp"
#include "aif/runtime/experiment.hpp"
#include "aif/runtime/plot.hpp"
#include "aif/runtime/server.hpp"
#include "aif/tasks/arc_lite.hpp"
#include "aif/tasks/grid.hpp"
#include "aif/tasks/metrics.hpp"
#include "aif/tasks/solver.hpp"
#include "aif/tasks/tmaze.hpp"
#include "aif/tasks/tmaze_model.hpp"
#include "aif/trace/hash.hpp"
#include "aif/trace/trace.hpp"
