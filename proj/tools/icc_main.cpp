#include <iostream>

#include "icc/cli.hpp"

int main(int argc, char** argv) {
    return icc::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
