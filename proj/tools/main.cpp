#include <iostream>

#include "vipcap/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return vipcap::cli::dispatch(args, std::cout, std::cerr);
}
