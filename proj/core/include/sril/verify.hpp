#pragma once

#include <string>
#include <vector>

namespace sril {

struct VerifyCheck {
    std::string name;
    bool passed = false;
    std::string detail;  // filled on failure
};

// Fast built-in self-test: finite-difference gradient oracle, closed-form
// loss/threshold values, mask construction, interpolation exactness,
// exemplar selection against brute force, checkpoint round-trip. Runs in a
// few seconds; intended for `sril verify` and sanity checks after a build.
std::vector<VerifyCheck> run_verification();

}  // namespace sril
