#pragma once

#include <cstdlib>
#include <memory>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace rca {

// Shared stderr logger. The level comes from RCA_LOG_LEVEL (trace, debug,
// info, warn, error, off); default is warn.
inline spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
    auto lg = std::make_shared<spdlog::logger>("rca", sink);
    lg->set_pattern("[%l] %v");
    lg->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("RCA_LOG_LEVEL")) {
      lg->set_level(spdlog::level::from_str(env));
    }
    return lg;
  }();
  return *instance;
}

}  // namespace rca
