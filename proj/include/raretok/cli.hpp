#pragma once

namespace raretok {

// argv-level entry point shared by the raretok binary and the test harness.
// Returns the process exit code: 0 ok, 2 usage or configuration, 3 data,
// 4 numeric failure.
int cli_main(int argc, const char* const* argv);

}  // namespace raretok
