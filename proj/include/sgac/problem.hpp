#pragma once

#include <string>

#include "sgac/errors.hpp"

namespace sgac {

/// One benchmark question.
struct Problem {
  std::string id;
  std::string statement;
  std::string ground_truth;
  int level = 1;  // 1 (easiest) .. 5 (hardest)
  std::string subject;
  int pool_index = -1;
};

inline void validate(const Problem& p) {
  if (p.level < 1 || p.level > 5) throw ContractViolation("problem " + p.id + ": level must be in [1, 5]");
  if (p.ground_truth.empty()) throw ContractViolation("problem " + p.id + ": empty ground truth");
}

}  // namespace sgac
