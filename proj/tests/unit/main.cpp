#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "levemb/platform.hpp"

int main(int argc, char** argv) {
  levemb::tune_allocator();
  doctest::Context context(argc, argv);
  return context.run();
}
