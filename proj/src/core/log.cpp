#include "surro/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace surro {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_color_mt("surro");
    l->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("SURRO_LOG")) l->set_level(spdlog::level::from_str(env));
    l->set_pattern("[%l] %v");
    return l;
  }();
  return instance;
}

}  // namespace surro
