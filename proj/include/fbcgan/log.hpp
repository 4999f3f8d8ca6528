#pragma once

#include <string>

namespace fbc::log {

void info(const std::string& msg);
void warn(const std::string& msg);
/// Silences info output (warnings still shown); used by tests and quiet CLI runs.
void set_quiet(bool quiet);

}  // namespace fbc::log
