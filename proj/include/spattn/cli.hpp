#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spattn {

// Entry point behind the spattn binary, separated for testing.
// Exit status: 0 all passed, 1 verification/benchmark failure, 2 usage error.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace spattn
