#include <string>
#include <vector>

#include "edgescale/harness.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return edgescale::cli(args);
}
