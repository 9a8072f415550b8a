#include <iostream>
#include <string>
#include <vector>

#include "ape/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return ape::cli::run(args, std::cout, std::cerr);
}
