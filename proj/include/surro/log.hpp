#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace surro {

/// Shared stderr logger. The level is read once from SURRO_LOG
/// (trace, debug, info, warn, error, off); default is warn.
std::shared_ptr<spdlog::logger> logger();

}  // namespace surro
