#include <iostream>

#include "pm/cli/cli.hpp"

int main(int argc, char** argv) {
    return pm::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
