#pragma once

namespace d4d {

// Exit codes: 0 success, 1 usage error, 2 data/config error.
int cli_main(int argc, const char* const* argv);

}  // namespace d4d
