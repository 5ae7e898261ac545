#include <string>
#include <vector>

#include "prefgen/cliapp.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return prefgen::cli::run(args);
}
