#include <iostream>

#include "screenflow/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return screenflow::run_cli(args, std::cout, std::cerr);
}
