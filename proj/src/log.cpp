#include "fbcgan/log.hpp"

#include <spdlog/spdlog.h>

namespace fbc::log {

void info(const std::string& msg) { spdlog::info(msg); }
void warn(const std::string& msg) { spdlog::warn(msg); }
void set_quiet(bool quiet) { spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info); }

}  // namespace fbc::log
