#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vidsum {

struct GradCheckResult {
  std::string component;
  double max_rel_error = 0.0;
  bool pass = false;
};

// Compares reverse-mode gradients against central finite differences for
// every primitive and for the composed student graphs under both losses.
// Relative error per element: |ad - fd| / max(|ad|, |fd|, 1e-8).
// `inject_fault` deliberately corrupts one analytic gradient (test hook).
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, double tolerance = 1e-4,
                                                 double h = 1e-5, bool inject_fault = false);

bool all_pass(const std::vector<GradCheckResult>& results);

}  // namespace vidsum
