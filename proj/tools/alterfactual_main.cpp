#include <string>
#include <vector>

#include "alterfactual/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return alterfactual::cli::run(std::move(args));
}
