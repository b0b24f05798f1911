#include <iostream>
#include <string>
#include <vector>

#include "spattn/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return spattn::cli_main(args, std::cout, std::cerr);
}
