#include "blipvar/folds.hpp"

#include <algorithm>
#include <numeric>

#include "blipvar/errors.hpp"
#include "blipvar/rng.hpp"

namespace blipvar {

std::vector<int> FoldPlan::validation_rows(int fold) const {
  std::vector<int> rows;
  for (int i = 0; i < static_cast<int>(assignment.size()); ++i) {
    if (assignment[i] == fold) rows.push_back(i);
  }
  return rows;
}

std::vector<int> FoldPlan::training_rows(int fold) const {
  std::vector<int> rows;
  for (int i = 0; i < static_cast<int>(assignment.size()); ++i) {
    if (assignment[i] != fold) rows.push_back(i);
  }
  return rows;
}

FoldPlan make_folds(int n, int v, std::uint64_t seed) {
  if (v < 2) throw ValidationError("make_folds: need at least 2 folds");
  if (v > n) throw ValidationError("make_folds: more folds than subjects");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto engine = make_engine(seed);
  std::shuffle(order.begin(), order.end(), engine);

  // First n%v folds take the extra subject.
  const int base = n / v;
  const int extra = n % v;
  FoldPlan plan{v, std::vector<int>(n, -1), seed};
  int pos = 0;
  for (int f = 0; f < v; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    for (int j = 0; j < size; ++j) plan.assignment[order[pos++]] = f;
  }
  return plan;
}

}  // namespace blipvar
