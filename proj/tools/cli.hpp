#pragma once

namespace factor::cli {

/// Entry point of the `factor` tool. Returns 0 on success, 1 on usage,
/// input or validation errors and 2 on internal failures.
int run(int argc, const char* const* argv);

}  // namespace factor::cli
