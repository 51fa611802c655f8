#include <gtest/gtest.h>

#include "bistnet/autograd.hpp"

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  bistnet::set_finite_checks(true);
  return RUN_ALL_TESTS();
}
