#include "delayhjb/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return delayhjb::cli::main_entry(argc, argv, std::cout, std::cerr);
}
