#include <string>
#include <vector>

#include "veritree/cli.hpp"

int main(int argc, char** argv) {
    return veritree::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
