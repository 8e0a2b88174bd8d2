#pragma once

#include <cstdint>
#include <vector>

namespace blipvar {

// Balanced random partition of 1..n into v validation folds; sizes differ by
// at most one and the assignment is reproducible from the seed.
struct FoldPlan {
  int v = 0;
  std::vector<int> assignment;  // fold index per subject, values in [0, v)
  std::uint64_t seed = 0;

  std::vector<int> validation_rows(int fold) const;
  std::vector<int> training_rows(int fold) const;
};

FoldPlan make_folds(int n, int v, std::uint64_t seed);

}  // namespace blipvar
