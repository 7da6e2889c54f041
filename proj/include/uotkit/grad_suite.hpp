#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uot {

struct GradSuiteEntry {
  std::string name;
  double max_relative_error = 0.0;
  double threshold = 0.0;
  bool pass() const { return max_relative_error <= threshold; }
};

/// Finite-difference checks on small seeded instances: FM loss and
/// reweighting loss (parameter gradients, threshold 1e-4), Monge-gap loss
/// (envelope gradient in the mapped points and in the map parameters,
/// threshold 1e-3; every perturbed loss re-solves its couplings).
std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed);

}  // namespace uot
