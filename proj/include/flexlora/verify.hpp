#pragma once

#include <string>
#include <vector>

namespace flexlora {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;  // failure description, empty on pass
};

/// Runs the numerical invariant suites of every module. With inject_fault
/// set, a sign is flipped inside decompose for the duration of the
/// roundtrip suite; that suite must then fail.
std::vector<SuiteResult> run_verification(bool inject_fault = false);

}  // namespace flexlora
