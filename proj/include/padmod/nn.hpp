// SPDX-License-Identifier: Apache-2.0
//
// Small CNN stack: just enough layers to train a classifier whose
// convolutions pad with any of the methods in baseline_padding.hpp or with a
// PaddingModule.

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "padmod/baseline_padding.hpp"
#include "padmod/padding_module.hpp"
#include "padmod/rng.hpp"
#include "padmod/tensor.hpp"

namespace padmod {

template <typename T>
using Batch = std::vector<Tensor<T>>;

template <typename T>
struct Param {
  std::vector<T> value;
  std::vector<T> grad;

  explicit Param(std::size_t n = 0) : value(n, T{}), grad(n, T{}) {}
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Batch<T> forward(const Batch<T>& x, bool training) = 0;
  /// Accumulates into parameter gradients and returns dLoss/dInput.
  virtual Batch<T> backward(const Batch<T>& dy) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  virtual std::string name() const = 0;
};

/// Stride-1 KxK convolution. The input is padded by (K-1)/2 first, so the
/// spatial size is preserved.
///
/// Backward folds padded-area gradients back through the padding's adjoint for
/// zero/reflect/replicate. Module and mean-interpolation padding strip them
/// instead; for the module that call also triggers its local filter update.
template <typename T>
class Conv2D : public Layer<T> {
 public:
  Conv2D(std::size_t kernel, std::size_t in_channels, std::size_t out_channels, PadKind padding,
         const ModuleOptions& module_options = {});

  /// He-uniform weights, zero bias.
  void init(Rng& rng);

  Batch<T> forward(const Batch<T>& x, bool training) override;
  Batch<T> backward(const Batch<T>& dy) override;
  std::vector<Param<T>*> params() override { return {&weights_, &bias_}; }
  std::string name() const override;

  std::size_t kernel() const { return kernel_; }
  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return out_channels_; }
  PadKind padding() const { return padding_; }

  /// Weights laid out (K, K, Cin, Cout).
  Param<T>& weights() { return weights_; }
  Param<T>& bias() { return bias_; }

  PaddingModule<T>* module() { return module_.get(); }
  const PaddingModule<T>* module() const { return module_.get(); }

  /// Wall-clock seconds spent padding and un-padding since the last reset.
  double pad_seconds() const { return pad_seconds_; }
  void reset_pad_seconds() { pad_seconds_ = 0; }

 private:
  std::size_t kernel_, in_channels_, out_channels_;
  PadKind padding_;
  Param<T> weights_, bias_;
  std::unique_ptr<PaddingModule<T>> module_;
  Batch<T> padded_inputs_;
  double pad_seconds_ = 0;
};

template <typename T>
class ReLU : public Layer<T> {
 public:
  Batch<T> forward(const Batch<T>& x, bool training) override;
  Batch<T> backward(const Batch<T>& dy) override;
  std::string name() const override { return "relu"; }

 private:
  Batch<T> inputs_;
};

/// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.
template <typename T>
class MaxPool2x2 : public Layer<T> {
 public:
  Batch<T> forward(const Batch<T>& x, bool training) override;
  Batch<T> backward(const Batch<T>& dy) override;
  std::string name() const override { return "maxpool2x2"; }

 private:
  std::vector<Shape> input_shapes_;
  std::vector<std::vector<std::size_t>> argmax_;
};

/// Fully connected layer over the flattened input; outputs shape (1, out).
template <typename T>
class Dense : public Layer<T> {
 public:
  Dense(std::size_t in_features, std::size_t out_features);

  void init(Rng& rng);

  Batch<T> forward(const Batch<T>& x, bool training) override;
  Batch<T> backward(const Batch<T>& dy) override;
  std::vector<Param<T>*> params() override { return {&weights_, &bias_}; }
  std::string name() const override;

  /// Weights laid out (in, out).
  Param<T>& weights() { return weights_; }
  Param<T>& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Param<T> weights_, bias_;
  Batch<T> inputs_;
};

template <typename T>
struct XentResult {
  double loss = 0;  ///< mean over the batch
  std::size_t correct = 0;
  Batch<T> dlogits;
};

/// Softmax cross-entropy over (1, K) logits.
template <typename T>
XentResult<T> softmax_xent(const Batch<T>& logits, std::span<const int> labels);

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t steps = 0;
  std::vector<std::vector<T>> m, v;
};

/// One bias-corrected Adam step over every parameter; buffers are created on
/// the first call.
template <typename T>
void adam_step(AdamState<T>& opt, std::span<Param<T>* const> params, double lr);

enum class LayerKind { conv, relu, maxpool, dense };

struct LayerSpec {
  LayerKind kind;
  std::size_t kernel = 0;  ///< conv only
  std::size_t units = 0;   ///< conv output channels or dense output features
};

enum class Placement { all, first, middle, last, comb };

Placement parse_placement(std::string_view name);
std::string to_string(Placement p);

struct NetworkSpec {
  Shape input{32, 32, 3};
  std::vector<LayerSpec> layers;
  /// Method for the convolutions selected by `placement`; the others zero-pad.
  PadKind padding = PadKind::zero;
  Placement placement = Placement::all;
  ModuleOptions module;
};

/// conv3x3(16)-pool-conv3x3(32)-pool-conv3x3(64)-conv3x3(64)-pool-dense(128)-dense(10),
/// ReLU after every conv and the hidden dense layer.
NetworkSpec tiny4_spec(PadKind padding, Placement placement);

/// Conv indices (0-based, in network order) that a placement selects out of
/// `conv_count` convolutions: first -> 0, middle -> conv_count/2, last ->
/// conv_count-1, comb -> those three, all -> every conv.
std::vector<std::size_t> placement_indices(Placement p, std::size_t conv_count);

template <typename T>
class Network {
 public:
  Network() = default;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

  Batch<T> forward(const Batch<T>& x, bool training);
  Batch<T> backward(const Batch<T>& dlogits);
  std::vector<Param<T>*> params();
  void zero_grad();

  std::vector<Conv2D<T>*> convs();
  /// Padding modules in network order.
  std::vector<PaddingModule<T>*> modules();

  std::size_t layer_count() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Validates that layer shapes compose and builds the network with seeded
/// initial weights.
template <typename T>
Network<T> build_network(const NetworkSpec& spec, std::uint64_t seed);

}  // namespace padmod
