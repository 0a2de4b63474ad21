// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ropim::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

// Statistical and algebraic checks on the sketch operators plus the
// end-to-end gradient check. Tolerances are fixed in the implementations.
// ROPIM_FAULT=<substring of a check name> poisons that check's measured
// statistic so the reporting path can be exercised.

CheckResult column_structure();                        // one +/-1 per dense column, 1e4 draws
CheckResult exact_decomposition();                     // roundtrip + complement == identity, <1e-12
CheckResult dense_oracle();                            // sparse ops == dense algebra, <1e-12
std::pair<CheckResult, CheckResult> estimator_stats(); // unbiasedness + variance bound, M=1e5
CheckResult expected_shrinkage();                      // Monte-Carlo mean of the round-trip
CheckResult exact_idempotence();                       // exact mode projector: idempotent, symmetric
CheckResult row_orthogonality();                       // dense rows have disjoint supports
CheckResult gradient_check(uint32_t threads = 0);      // backward vs central differences, 5 seeds

std::vector<CheckResult> run_all(uint32_t threads = 0);
bool all_passed(const std::vector<CheckResult>& results);
void print_table(const std::vector<CheckResult>& results);

}  // namespace ropim::verify
