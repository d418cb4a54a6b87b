#pragma once

namespace zldc {

// Verb dispatch for the zldc binary. Returns the process exit code:
// 0 success, 2 validation/usage error, 3 runtime or numeric error.
int run_cli(int argc, const char* const* argv);

}  // namespace zldc
