#include "flowtrack/commands.hpp"

int main(int argc, char** argv) {
  return flowtrack::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
