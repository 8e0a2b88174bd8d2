#include <doctest.h>

#include <algorithm>

#include "blipvar/errors.hpp"
#include "blipvar/folds.hpp"

using namespace blipvar;

TEST_CASE("make_folds: n=v gives singleton folds") {
  const auto plan = make_folds(10, 10, 1);
  std::vector<int> sizes(10, 0);
  for (int f : plan.assignment) ++sizes[f];
  for (int s : sizes) CHECK(s == 1);
}

TEST_CASE("make_folds balances sizes within one") {
  const auto plan = make_folds(10, 3, 1);
  std::vector<int> sizes(3, 0);
  for (int f : plan.assignment) ++sizes[f];
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes[0] == 3);
  CHECK(sizes[1] == 3);
  CHECK(sizes[2] == 4);
}

TEST_CASE("make_folds is reproducible from the seed") {
  const auto p1 = make_folds(57, 10, 42);
  const auto p2 = make_folds(57, 10, 42);
  CHECK(p1.assignment == p2.assignment);
  const auto p3 = make_folds(57, 10, 43);
  CHECK(p1.assignment != p3.assignment);
}

TEST_CASE("make_folds validates v") {
  CHECK_THROWS_AS(make_folds(5, 6, 1), ValidationError);
  CHECK_THROWS_AS(make_folds(5, 1, 1), ValidationError);
}

TEST_CASE("training and validation rows partition the sample") {
  const auto plan = make_folds(23, 4, 7);
  for (int f = 0; f < 4; ++f) {
    const auto train = plan.training_rows(f);
    const auto valid = plan.validation_rows(f);
    CHECK(train.size() + valid.size() == 23);
    for (int i : valid) CHECK(plan.assignment[i] == f);
    for (int i : train) CHECK(plan.assignment[i] != f);
  }
}
