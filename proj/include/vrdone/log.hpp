#pragma once

#include <spdlog/spdlog.h>

namespace vrdone::log {

using spdlog::debug;
using spdlog::error;
using spdlog::info;
using spdlog::trace;
using spdlog::warn;

/// Reads VRDONE_LOG (trace, debug, info, warn, error, off); default info.
void init_from_env();

}  // namespace vrdone::log
