// SPDX-License-Identifier: Apache-2.0
//
// Seeded, single-threaded training loop for comparing padding methods.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "padmod/data_io.hpp"
#include "padmod/nn.hpp"

namespace padmod {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  /// Modules are frozen once this many epochs have completed; 0 freezes them
  /// before the first step.
  std::optional<std::size_t> freeze_after;
};

struct EpochStats {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0;
  double train_accuracy = 0;
  double test_loss = 0;
  double test_accuracy = 0;
  /// Mean local MSE per placed module, in network order. A frozen module
  /// keeps reporting the last value it measured (NaN if it never trained).
  std::vector<double> module_mse;
  double seconds = 0;
  double pad_seconds = 0;  ///< part of `seconds` spent padding / un-padding

  double module_mse_mean() const;
};

struct TrainReport {
  std::vector<EpochStats> epochs;

  /// Mean test accuracy over the last five epochs (fewer if the run is
  /// shorter).
  double last5_test_accuracy() const;
  std::vector<MetricsRow> metrics_rows() const;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains `net` with Adam on softmax cross-entropy. Deterministic given the
/// config and the network's initial state. Throws DivergenceError when the
/// loss becomes non-finite and std::invalid_argument on empty data.
TrainReport train(Network<float>& net, std::span<const LabeledImage> train_set,
                  std::span<const LabeledImage> test_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Builds the network from `spec` (seeded by config.seed) and trains it.
TrainReport train(const NetworkSpec& spec, std::span<const LabeledImage> train_set,
                  std::span<const LabeledImage> test_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
};

EvalResult evaluate(Network<float>& net, std::span<const LabeledImage> data, std::size_t batch);

}  // namespace padmod
