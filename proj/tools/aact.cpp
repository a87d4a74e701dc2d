#include <vector>
#include <string>

#include "aact/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return aact::run_cli(std::move(args));
}
