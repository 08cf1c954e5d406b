#pragma once

#include <iostream>

namespace edl {

/// Command-line entry point. Exit codes: 0 success, 1 runtime failure,
/// 2 usage or configuration error.
int run_cli(int argc, const char* const* argv, std::istream& in = std::cin,
            std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace edl
