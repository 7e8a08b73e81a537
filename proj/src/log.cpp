#include "vrdone/log.hpp"

#include <cstdlib>
#include <string>

namespace vrdone::log {

void init_from_env() {
  const char* env = std::getenv("VRDONE_LOG");
  if (!env || !*env) {
    spdlog::set_level(spdlog::level::info);
    return;
  }
  const auto level = spdlog::level::from_str(env);
  // from_str maps unknown names to off; keep info instead and say so.
  if (level == spdlog::level::off && std::string(env) != "off") {
    spdlog::set_level(spdlog::level::info);
    spdlog::warn("VRDONE_LOG={} not recognised, using info", env);
    return;
  }
  spdlog::set_level(level);
}

}  // namespace vrdone::log
