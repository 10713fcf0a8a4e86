#pragma once

#include <string>
#include <vector>

namespace hebbseed::selfcheck {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Learning-rule gates against the independent oracles.
CheckResult hpca_pca_equivalence(); // linear HPCA rows align with PCA eigenvectors
CheckResult wta_centroid_recovery();
CheckResult conv_update_averaging(); // shared-filter step vs explicit per-patch loop
CheckResult schedule_and_regime_counts();

// Oracle self-consistency.
CheckResult jacobi_analytic();
CheckResult pca_reconstruction();

std::vector<CheckResult> run_all();

} // namespace hebbseed::selfcheck
