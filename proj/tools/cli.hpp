#ifndef FLOE_TOOLS_CLI_HPP
#define FLOE_TOOLS_CLI_HPP

namespace floe {

// Parses argv and runs one subcommand. Returns the process exit code:
// 0 success, 2 usage error, 1 runtime error.
int run_cli(int argc, const char *const *argv);

}  // namespace floe

#endif
