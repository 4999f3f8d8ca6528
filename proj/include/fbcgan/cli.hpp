#pragma once

namespace fbc {

/// Entry point of the `fbcgan` tool. Returns 0 on success, 2 on a usage
/// error, 1 on a runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace fbc
