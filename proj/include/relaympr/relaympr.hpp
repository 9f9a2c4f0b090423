#pragma once

#include "relaympr/common.hpp"
#include "relaympr/channel_model.hpp"
#include "relaympr/queue_types.hpp"
#include "relaympr/dtmc_engine.hpp"
#include "relaympr/two_user_analysis.hpp"
#include "relaympr/symmetric_analysis.hpp"
#include "relaympr/slot_simulator.hpp"
#include "relaympr/experiment.hpp"
