#include "levemb/commands.hpp"
#include "levemb/platform.hpp"

int main(int argc, char** argv) {
  levemb::tune_allocator();
  return levemb::run_cli(argc, argv);
}
