// checks.hpp: fast built-in invariant suite behind `dcr check`

#pragma once

#include <string>
#include <vector>

namespace dcr {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

std::vector<CheckResult> run_invariant_checks();

} // namespace dcr
