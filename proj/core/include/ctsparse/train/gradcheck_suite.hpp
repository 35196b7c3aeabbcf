#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ctsparse::train {

struct GradCheckCase {
  std::string name;
  bool pass = false;
  double max_rel_err = 0.0;
};

// Central-difference verification of every differentiable op, the network
// building blocks, both full networks and every training loss, each on a
// deterministic instance sized so the check resolves a 1e-6 relative
// tolerance. Prints one PASS/FAIL line per case to `out`; returns the number
// of failures (0 when the whole registry passes).
int run_gradient_checks(std::ostream& out, std::vector<GradCheckCase>* results = nullptr);

}  // namespace ctsparse::train
