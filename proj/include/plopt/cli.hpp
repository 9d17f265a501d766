#pragma once

namespace plopt {

// Full command-line front end. Returns the process exit status:
// 0 success, 1 I/O or validation failure, 2 usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace plopt
