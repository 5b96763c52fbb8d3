#pragma once

#include <string>
#include <vector>

namespace multilift::checks {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Hover fixed point, ballistic closed forms, RK4 order, unilateral cables,
// momentum bookkeeping.
std::vector<CheckResult> run_physics_checks();

// Analytic backprop against central finite differences on random nets.
std::vector<CheckResult> run_gradient_checks();

// GAE against brute-force discounted returns and one-step TD residuals.
std::vector<CheckResult> run_gae_checks();

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace multilift::checks
