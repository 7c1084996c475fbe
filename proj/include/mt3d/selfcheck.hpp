#pragma once

#include <string>
#include <vector>

namespace mt3d {

struct CheckResult {
    std::string name;
    bool pass = false;
    double seconds = 0.0;
    std::string detail;
};

// Embedded oracle suite: discretization, scan equivalences, propagation and
// attention oracles, geometry Monte Carlo, metric brute force, loss gradient
// checks, and a smoke-level training fit. `inject_fault` corrupts one
// comparison on purpose so the harness itself can be exercised.
std::vector<CheckResult> run_selfcheck(bool inject_fault = false);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace mt3d
