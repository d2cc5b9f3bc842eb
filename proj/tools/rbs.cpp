#include <string>
#include <vector>

#include "rbs/cli.hpp"

int main(int argc, char** argv) { return rbs::cli::run(std::vector<std::string>(argv + 1, argv + argc)); }
