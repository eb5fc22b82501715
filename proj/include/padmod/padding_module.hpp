// SPDX-License-Identifier: Apache-2.0
//
// Trainable padding layer. Each channel owns a 1x3 filter that learns to
// predict an input's outer border from the row (or column) next to it. The
// learned filter then extrapolates the padding ring by ring. The filters are
// trained only on their own local MSE; the model's loss never reaches them,
// and gradients arriving for the padded ring are dropped on the way back.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "padmod/tensor.hpp"

namespace padmod {

template <typename T>
using Filter3 = std::array<T, 3>;

/// Row order of every bundle.
enum BundleRow : std::size_t { kTop = 0, kBottom = 1, kLeft = 2, kRight = 3 };

/// Four row vectors: top border, bottom border, transposed left border and
/// transposed right border (or the rows next to them). Ragged so that
/// rectangular inputs work: top/bottom have one length, left/right another.
template <typename T>
struct BorderBundle {
  std::array<RowVec<T>, 4> rows;

  BorderBundle() = default;
  explicit BorderBundle(std::array<RowVec<T>, 4> r);

  std::array<std::size_t, 4> lengths() const;
  std::size_t term_count() const;

  friend bool operator==(const BorderBundle&, const BorderBundle&) = default;
};

/// A BorderBundle whose rows went through reflect_pad_1d then zero_pad_1d.
template <typename T>
struct PredictorBundle {
  std::array<RowVec<T>, 4> rows;

  std::array<std::size_t, 4> lengths() const;

  friend bool operator==(const PredictorBundle&, const PredictorBundle&) = default;
};

enum class Mode { train, eval };
enum class LocalOptimizer { sgd, adam };
enum class FilterInit { mean, uniform };

/// One 1x3 filter per channel plus the state of the module's own optimizer.
template <typename T>
class FilterBank {
 public:
  /// `mean` sets every filter to (1/3, 1/3, 1/3); `uniform` draws each weight
  /// from U[-0.1, 0.1] using `seed`.
  FilterBank(std::size_t channels, FilterInit init = FilterInit::mean, std::uint64_t seed = 0,
             double learning_rate = 0.01, LocalOptimizer optimizer = LocalOptimizer::sgd);
  explicit FilterBank(std::vector<Filter3<T>> weights, double learning_rate = 0.01,
                      LocalOptimizer optimizer = LocalOptimizer::sgd);

  std::size_t channels() const { return weights_.size(); }
  const Filter3<T>& weights(std::size_t channel) const;
  const std::vector<Filter3<T>>& all_weights() const { return weights_; }
  void set_weights(std::size_t channel, const Filter3<T>& w);

  double learning_rate() const { return learning_rate_; }
  LocalOptimizer optimizer() const { return optimizer_; }

  /// One optimizer step on `channel`. Throws DivergenceError if the result is
  /// not finite.
  void step(std::size_t channel, const Filter3<T>& grad);

 private:
  struct AdamMoments {
    std::array<double, 3> m{};
    std::array<double, 3> v{};
    std::uint64_t steps = 0;
  };

  std::vector<Filter3<T>> weights_;
  std::vector<AdamMoments> moments_;
  double learning_rate_;
  LocalOptimizer optimizer_;
};

/// Borders of the original input: (row 0, row r-1, column 0, column c-1).
/// Requires r, c >= 4.
template <typename T>
BorderBundle<T> extract_target(const Tensor<T>& m);

/// Rows/columns adjacent to the borders, corners excluded:
/// (row 1 [1:c-1], row r-2 [1:c-1], column 1 [1:r-1], column c-2 [1:r-1]).
/// Requires r, c >= 4.
template <typename T>
BorderBundle<T> extract_neighbors(const Tensor<T>& m);

/// Full borders of the current (possibly already padded) input. Requires
/// r, c >= 2.
template <typename T>
BorderBundle<T> extract_borders(const Tensor<T>& m);

template <typename T>
PredictorBundle<T> build_predictor(const BorderBundle<T>& b);

/// Valid 1x3 correlation with stride 1 over every predictor row.
template <typename T>
BorderBundle<T> predict_borders(const Filter3<T>& theta, const PredictorBundle<T>& p);

template <typename T>
BorderBundle<T> predict_borders(const FilterBank<T>& filters, const PredictorBundle<T>& p,
                                std::size_t channel);

/// Puts one predicted ring around `m`. Corners receive one value from a
/// horizontal row and one from a vertical row and keep their average.
template <typename T>
Tensor<T> assemble_padded(const Tensor<T>& m, const BorderBundle<T>& o);

/// Pads a single (H, W) plane by `size` rings using a fixed filter.
template <typename T>
Tensor<T> pad_plane(const Tensor<T>& plane, const Filter3<T>& theta, std::size_t size);

/// Sum of squared residuals between the filter's predictions and `t`.
template <typename T>
double local_sse(const Filter3<T>& theta, const PredictorBundle<T>& p, const BorderBundle<T>& t);

/// local_sse divided by the number of residual terms.
template <typename T>
double local_mse(const Filter3<T>& theta, const PredictorBundle<T>& p, const BorderBundle<T>& t);

template <typename T>
double local_mse(const FilterBank<T>& filters, const PredictorBundle<T>& p, const BorderBundle<T>& t,
                 std::size_t channel);

/// Gradient of local_mse with respect to the three filter weights.
template <typename T>
std::array<double, 3> local_mse_grad(const Filter3<T>& theta, const PredictorBundle<T>& p,
                                     const BorderBundle<T>& t);

template <typename T>
std::array<double, 3> local_mse_grad(const FilterBank<T>& filters, const PredictorBundle<T>& p,
                                     const BorderBundle<T>& t, std::size_t channel);

struct ModuleOptions {
  std::size_t pad_size = 1;
  double learning_rate = 0.01;
  LocalOptimizer optimizer = LocalOptimizer::sgd;
  FilterInit init = FilterInit::mean;
  std::uint64_t seed = 0;
};

/// The padding layer. In train mode a forward pass caches the supervision
/// built from the original input; backward spends that cache on one local
/// optimizer step and returns the incoming gradient with the padded rings
/// stripped. Not safe for concurrent training steps.
template <typename T>
class PaddingModule {
 public:
  /// Supervision for one channel of one sample.
  struct CachedPair {
    PredictorBundle<T> predictor;
    BorderBundle<T> target;
  };

  PaddingModule(std::size_t channels, const ModuleOptions& options = {});
  PaddingModule(FilterBank<T> filters, std::size_t pad_size);

  Tensor<T> forward(const Tensor<T>& m);
  std::vector<Tensor<T>> forward(std::span<const Tensor<T>> batch);

  Tensor<T> backward(const Tensor<T>& g);
  std::vector<Tensor<T>> backward(std::span<const Tensor<T>> grads);

  /// Averages local_mse_grad over the cached batch, steps every channel's
  /// filter once and clears the cache.
  void local_update();

  void set_mode(Mode mode) { mode_ = mode; }
  Mode mode() const { return mode_; }

  /// A frozen module pads like eval mode and never updates again.
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  bool has_cache() const { return !cache_.empty(); }
  /// cache()[sample][channel]
  const std::vector<std::vector<CachedPair>>& cache() const { return cache_; }

  /// Mean local MSE of the most recent train-mode forward, measured with the
  /// filters that produced it.
  std::optional<double> last_mse() const { return last_mse_; }

  std::size_t pad_size() const { return pad_size_; }
  std::size_t channels() const { return filters_.channels(); }
  const FilterBank<T>& filters() const { return filters_; }
  FilterBank<T>& filters() { return filters_; }

 private:
  bool training() const { return mode_ == Mode::train && !frozen_; }

  FilterBank<T> filters_;
  std::size_t pad_size_;
  Mode mode_ = Mode::train;
  bool frozen_ = false;
  std::vector<std::vector<CachedPair>> cache_;
  std::optional<Shape> cached_input_shape_;
  std::optional<double> last_mse_;
};

// Weights file: "PADMOD1\n", u32 LE channel count, then three f32 LE per
// channel. A file may hold several such blocks back to back.

std::string encode_weights(const std::vector<Filter3<float>>& weights);
/// Reads one block; throws std::runtime_error on a malformed block.
std::vector<Filter3<float>> decode_weights(std::istream& in);
void write_weights_file(const std::string& path, const std::vector<std::vector<Filter3<float>>>& blocks);
std::vector<std::vector<Filter3<float>>> read_weights_file(const std::string& path);

}  // namespace padmod
