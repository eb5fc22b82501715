// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient checking in double precision.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace padmod {

inline constexpr double kFiniteDiffStep = 1e-4;

/// |analytic - numeric| / max(|analytic|, |numeric|, 1).
double gradient_rel_error(double analytic, double numeric);

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;

  bool passed() const { return failures == 0; }
  /// Folds another report in; `index_offset` shifts its worst_index.
  void merge(const GradCheckReport& other, std::size_t index_offset = 0);
};

using ScalarFn = std::function<double(std::span<const double>)>;

/// Compares `analytic` against central differences of `fn` at `params`.
GradCheckReport finite_diff_check(const ScalarFn& fn, std::span<const double> params,
                                  std::span<const double> analytic, double tol, double step = kFiniteDiffStep);

struct SuiteResult {
  std::string name;
  GradCheckReport report;
  std::string worst_case;  ///< human-readable description of the worst component
};

/// Local-loss gradient of the padding module on `trials` random instances
/// (planes 4x4..8x8 with values in [0,1], filters in [-1,1]^3).
SuiteResult run_module_gradient_suite(std::size_t trials, double tol, std::uint64_t seed);

/// conv2d (zero, reflect and replicate padding), dense, relu, maxpool and
/// softmax cross-entropy backward passes on small random cases.
std::vector<SuiteResult> run_layer_gradient_suites(std::size_t trials, double tol, std::uint64_t seed);

}  // namespace padmod
