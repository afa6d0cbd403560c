#include <string>
#include <vector>

#include "mimatch/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mimatch::run_cli(args);
}
