#pragma once

// Property checks shared by the unit tests and the acceptance binary. Each
// returns the measured statistic plus a pass flag against the stated bound.

#include <cstdint>
#include <string>

namespace lea::testing {

struct PropertyResult {
  bool pass = false;
  double value = 0.0;  // worst observed statistic
  std::string detail;
};

/// Backprop against central differences (step 1e-5) on `pairs` random
/// (network, sample) pairs. value = max normwise relative error.
PropertyResult gradient_check(std::size_t pairs = 100, std::uint64_t seed = 1);

/// Random fault maps, shapes, beta and avoid sets through the planner;
/// checks bounds, disjointness, avoid-set respect, masks and the success flag.
/// value = number of violations.
PropertyResult mapping_legality_fuzz(std::size_t cases = 1000, std::uint64_t seed = 2);

/// Whole-network plans on random chips; every clean_mask entry is compared
/// with a brute-force scan of the fault map. value = number of mismatches.
PropertyResult mask_soundness(std::size_t chips = 50, std::uint64_t seed = 3);

/// Noiseless, successfully mapped network; every faulted device is forced to
/// random conductances and the decoded outputs are compared. value = max
/// absolute change.
PropertyResult stuck_value_independence(std::size_t trials = 5, std::uint64_t seed = 4);

/// Read-noise-only chip; variance of each averaged current over `reads`
/// repeats against sigma^2 / beta. value = worst relative deviation.
PropertyResult variance_reduction(std::size_t reads = 1000, std::uint64_t seed = 5);

/// Noiseless kernel_vmm against a dense G.V oracle and for linearity in the
/// voltages. value = max normwise relative error.
PropertyResult vmm_oracle_linearity(std::size_t trials = 200, std::uint64_t seed = 6);

}  // namespace lea::testing
