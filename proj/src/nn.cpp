// SPDX-License-Identifier: Apache-2.0

#include "padmod/nn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace padmod {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename T>
void require_batch_size(const Batch<T>& a, std::size_t n, const char* what) {
  if (a.size() != n) {
    throw std::invalid_argument(std::string(what) + ": batch size " + std::to_string(a.size()) +
                                " does not match forward batch " + std::to_string(n));
  }
}

}  // namespace

// --- Conv2D -------------------------------------------------------------------

template <typename T>
Conv2D<T>::Conv2D(std::size_t kernel, std::size_t in_channels, std::size_t out_channels, PadKind padding,
                  const ModuleOptions& module_options)
    : kernel_(kernel),
      in_channels_(in_channels),
      out_channels_(out_channels),
      padding_(padding),
      weights_(kernel * kernel * in_channels * out_channels),
      bias_(out_channels) {
  if (kernel == 0 || kernel % 2 == 0) throw std::invalid_argument("conv kernel size must be odd");
  if (in_channels == 0 || out_channels == 0) throw std::invalid_argument("conv channel counts must be >= 1");
  if (padding == PadKind::module && kernel > 1) {
    ModuleOptions opts = module_options;
    opts.pad_size = (kernel - 1) / 2;
    module_ = std::make_unique<PaddingModule<T>>(in_channels, opts);
  }
}

template <typename T>
void Conv2D<T>::init(Rng& rng) {
  const double fan_in = static_cast<double>(kernel_ * kernel_ * in_channels_);
  const double limit = std::sqrt(6.0 / fan_in);
  for (T& w : weights_.value) w = static_cast<T>(rng.uniform(-limit, limit));
  std::fill(bias_.value.begin(), bias_.value.end(), T{});
}

template <typename T>
std::string Conv2D<T>::name() const {
  return "conv" + std::to_string(kernel_) + "x" + std::to_string(kernel_) + "(" + std::to_string(out_channels_) +
         ", " + to_string(padding_) + ")";
}

template <typename T>
Batch<T> Conv2D<T>::forward(const Batch<T>& x, bool training) {
  const std::size_t s = (kernel_ - 1) / 2;
  const auto t0 = Clock::now();
  padded_inputs_.clear();
  padded_inputs_.reserve(x.size());
  for (const auto& xi : x) {
    if (xi.shape().rank() != 3 || xi.channels() != in_channels_) {
      throw std::invalid_argument(name() + ": expected " + std::to_string(in_channels_) + " channels, got " +
                                  xi.shape().str());
    }
  }
  if (s == 0) {
    padded_inputs_ = x;
  } else if (module_) {
    module_->set_mode(training ? Mode::train : Mode::eval);
    padded_inputs_ = module_->forward(std::span<const Tensor<T>>(x));
  } else {
    for (const auto& xi : x) padded_inputs_.push_back(pad_fixed(xi, PadMethod{padding_, s}));
  }
  pad_seconds_ += seconds_since(t0);

  const std::size_t k = kernel_, cin = in_channels_, cout = out_channels_;
  const T* w = weights_.value.data();
  Batch<T> out;
  out.reserve(x.size());
  for (const auto& xp : padded_inputs_) {
    const std::size_t oh = xp.height() - k + 1, ow = xp.width() - k + 1;
    Tensor<T> y = Tensor<T>::zeros(Shape{oh, ow, cout});
    for (std::size_t h = 0; h < oh; ++h) {
      for (std::size_t wcol = 0; wcol < ow; ++wcol) {
        T* yrow = &y(h, wcol, 0);
        std::copy(bias_.value.begin(), bias_.value.end(), yrow);
        for (std::size_t kh = 0; kh < k; ++kh) {
          for (std::size_t kw = 0; kw < k; ++kw) {
            const T* xv = xp.data().data() + ((h + kh) * xp.width() + wcol + kw) * cin;
            const T* wk = w + (kh * k + kw) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const T a = xv[ci];
              const T* wrow = wk + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) yrow[co] += a * wrow[co];
            }
          }
        }
      }
    }
    out.push_back(std::move(y));
  }
  return out;
}

template <typename T>
Batch<T> Conv2D<T>::backward(const Batch<T>& dy) {
  require_batch_size(dy, padded_inputs_.size(), "conv backward");
  const std::size_t k = kernel_, cin = in_channels_, cout = out_channels_;
  const T* w = weights_.value.data();
  T* dw = weights_.grad.data();
  Batch<T> dpadded;
  dpadded.reserve(dy.size());
  for (std::size_t n = 0; n < dy.size(); ++n) {
    const Tensor<T>& xp = padded_inputs_[n];
    const Tensor<T>& g = dy[n];
    const std::size_t oh = xp.height() - k + 1, ow = xp.width() - k + 1;
    if (g.shape() != Shape{oh, ow, cout}) throw std::invalid_argument(name() + ": gradient shape mismatch");
    Tensor<T> dxp = Tensor<T>::zeros(xp.shape());
    for (std::size_t h = 0; h < oh; ++h) {
      for (std::size_t wcol = 0; wcol < ow; ++wcol) {
        const T* grow = g.data().data() + (h * ow + wcol) * cout;
        for (std::size_t co = 0; co < cout; ++co) bias_.grad[co] += grow[co];
        for (std::size_t kh = 0; kh < k; ++kh) {
          for (std::size_t kw = 0; kw < k; ++kw) {
            const T* xv = xp.data().data() + ((h + kh) * xp.width() + wcol + kw) * cin;
            T* dxv = &dxp(h + kh, wcol + kw, 0);
            const std::size_t base = (kh * k + kw) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const T* wrow = w + base + ci * cout;
              T* dwrow = dw + base + ci * cout;
              const T a = xv[ci];
              T acc{};
              for (std::size_t co = 0; co < cout; ++co) {
                acc += grow[co] * wrow[co];
                dwrow[co] += a * grow[co];
              }
              dxv[ci] += acc;
            }
          }
        }
      }
    }
    dpadded.push_back(std::move(dxp));
  }

  const std::size_t s = (k - 1) / 2;
  if (s == 0) return dpadded;
  const auto t0 = Clock::now();
  Batch<T> dx;
  if (module_) {
    dx = module_->backward(std::span<const Tensor<T>>(dpadded));
  } else {
    dx.reserve(dpadded.size());
    for (const auto& d : dpadded) dx.push_back(pad_adjoint(d, PadMethod{padding_, s}));
  }
  pad_seconds_ += seconds_since(t0);
  return dx;
}

// --- ReLU ---------------------------------------------------------------------

template <typename T>
Batch<T> ReLU<T>::forward(const Batch<T>& x, bool) {
  inputs_ = x;
  Batch<T> out = x;
  for (auto& t : out) {
    for (T& v : t.data()) v = v > T{} ? v : T{};
  }
  return out;
}

template <typename T>
Batch<T> ReLU<T>::backward(const Batch<T>& dy) {
  require_batch_size(dy, inputs_.size(), "relu backward");
  Batch<T> dx = dy;
  for (std::size_t n = 0; n < dx.size(); ++n) {
    if (dx[n].shape() != inputs_[n].shape()) throw std::invalid_argument("relu: gradient shape mismatch");
    auto in = inputs_[n].data();
    auto d = dx[n].data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(in[i] > T{})) d[i] = T{};
    }
  }
  return dx;
}

// --- MaxPool2x2 -----------------------------------------------------------------

template <typename T>
Batch<T> MaxPool2x2<T>::forward(const Batch<T>& x, bool) {
  input_shapes_.clear();
  argmax_.clear();
  Batch<T> out;
  out.reserve(x.size());
  for (const auto& xi : x) {
    const std::size_t oh = xi.height() / 2, ow = xi.width() / 2, c = xi.channels();
    if (oh == 0 || ow == 0) throw std::invalid_argument("maxpool2x2 input too small: " + xi.shape().str());
    Tensor<T> y = Tensor<T>::zeros(Shape{oh, ow, c});
    std::vector<std::size_t> arg(oh * ow * c);
    for (std::size_t h = 0; h < oh; ++h) {
      for (std::size_t w = 0; w < ow; ++w) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = ((2 * h) * xi.width() + 2 * w) * c + ch;
          for (std::size_t dh = 0; dh < 2; ++dh) {
            for (std::size_t dw = 0; dw < 2; ++dw) {
              const std::size_t idx = ((2 * h + dh) * xi.width() + 2 * w + dw) * c + ch;
              if (xi.data()[idx] > xi.data()[best]) best = idx;
            }
          }
          y(h, w, ch) = xi.data()[best];
          arg[(h * ow + w) * c + ch] = best;
        }
      }
    }
    input_shapes_.push_back(xi.shape());
    argmax_.push_back(std::move(arg));
    out.push_back(std::move(y));
  }
  return out;
}

template <typename T>
Batch<T> MaxPool2x2<T>::backward(const Batch<T>& dy) {
  require_batch_size(dy, argmax_.size(), "maxpool backward");
  Batch<T> dx;
  dx.reserve(dy.size());
  for (std::size_t n = 0; n < dy.size(); ++n) {
    if (dy[n].size() != argmax_[n].size()) throw std::invalid_argument("maxpool: gradient shape mismatch");
    Tensor<T> d = Tensor<T>::zeros(input_shapes_[n]);
    auto g = dy[n].data();
    for (std::size_t i = 0; i < g.size(); ++i) d.data()[argmax_[n][i]] += g[i];
    dx.push_back(std::move(d));
  }
  return dx;
}

// --- Dense ----------------------------------------------------------------------

template <typename T>
Dense<T>::Dense(std::size_t in_features, std::size_t out_features)
    : in_(in_features), out_(out_features), weights_(in_features * out_features), bias_(out_features) {
  if (in_ == 0 || out_ == 0) throw std::invalid_argument("dense layer sizes must be >= 1");
}

template <typename T>
void Dense<T>::init(Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_));
  for (T& w : weights_.value) w = static_cast<T>(rng.uniform(-limit, limit));
  std::fill(bias_.value.begin(), bias_.value.end(), T{});
}

template <typename T>
std::string Dense<T>::name() const {
  return "dense(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
}

template <typename T>
Batch<T> Dense<T>::forward(const Batch<T>& x, bool) {
  inputs_ = x;
  Batch<T> out;
  out.reserve(x.size());
  const T* w = weights_.value.data();
  for (const auto& xi : x) {
    if (xi.size() != in_) {
      throw std::invalid_argument(name() + ": input has " + std::to_string(xi.size()) + " features");
    }
    std::vector<T> y(bias_.value);
    auto in = xi.data();
    for (std::size_t i = 0; i < in_; ++i) {
      const T a = in[i];
      const T* wrow = w + i * out_;
      for (std::size_t o = 0; o < out_; ++o) y[o] += a * wrow[o];
    }
    out.emplace_back(Shape{1, out_}, std::move(y));
  }
  return out;
}

template <typename T>
Batch<T> Dense<T>::backward(const Batch<T>& dy) {
  require_batch_size(dy, inputs_.size(), "dense backward");
  Batch<T> dx;
  dx.reserve(dy.size());
  const T* w = weights_.value.data();
  T* dw = weights_.grad.data();
  for (std::size_t n = 0; n < dy.size(); ++n) {
    auto g = dy[n].data();
    if (g.size() != out_) throw std::invalid_argument(name() + ": gradient shape mismatch");
    for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += g[o];
    auto in = inputs_[n].data();
    Tensor<T> d = Tensor<T>::zeros(inputs_[n].shape());
    for (std::size_t i = 0; i < in_; ++i) {
      const T* wrow = w + i * out_;
      T* dwrow = dw + i * out_;
      const T a = in[i];
      T acc{};
      for (std::size_t o = 0; o < out_; ++o) {
        acc += g[o] * wrow[o];
        dwrow[o] += a * g[o];
      }
      d.data()[i] = acc;
    }
    dx.push_back(std::move(d));
  }
  return dx;
}

// --- loss and optimizer -----------------------------------------------------------

template <typename T>
XentResult<T> softmax_xent(const Batch<T>& logits, std::span<const int> labels) {
  if (logits.size() != labels.size()) throw std::invalid_argument("softmax_xent: labels do not match batch");
  if (logits.empty()) throw std::invalid_argument("softmax_xent: empty batch");
  XentResult<T> r;
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  for (std::size_t n = 0; n < logits.size(); ++n) {
    auto z = logits[n].data();
    const std::size_t k = z.size();
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= k) {
      throw std::invalid_argument("softmax_xent: label out of range");
    }
    const auto label = static_cast<std::size_t>(labels[n]);
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0;
    for (T v : z) denom += std::exp(static_cast<double>(v) - zmax);
    const double log_denom = std::log(denom);
    r.loss += (log_denom - (static_cast<double>(z[label]) - zmax)) * inv_n;
    const auto argmax = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (argmax == label) ++r.correct;
    std::vector<T> d(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double p = std::exp(static_cast<double>(z[i]) - zmax - log_denom);
      d[i] = static_cast<T>((p - (i == label ? 1.0 : 0.0)) * inv_n);
    }
    r.dlogits.emplace_back(logits[n].shape(), std::move(d));
  }
  return r;
}

template <typename T>
void adam_step(AdamState<T>& opt, std::span<Param<T>* const> params, double lr) {
  if (opt.m.empty()) {
    for (const Param<T>* p : params) {
      opt.m.emplace_back(p->value.size(), T{});
      opt.v.emplace_back(p->value.size(), T{});
    }
  }
  if (opt.m.size() != params.size()) throw std::invalid_argument("adam_step: parameter list changed");
  ++opt.steps;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.steps));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.steps));
  const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
  const T step = static_cast<T>(lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(opt.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    auto& m = opt.m[i];
    auto& v = opt.v[i];
    if (p.grad.size() != p.value.size() || m.size() != p.value.size()) {
      throw std::invalid_argument("adam_step: parameter and gradient shapes differ");
    }
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const T g = p.grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      p.value[j] -= step * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
    }
  }
}

// --- network --------------------------------------------------------------------

Placement parse_placement(std::string_view name) {
  if (name == "all") return Placement::all;
  if (name == "first") return Placement::first;
  if (name == "middle") return Placement::middle;
  if (name == "last") return Placement::last;
  if (name == "comb") return Placement::comb;
  throw std::invalid_argument("unknown placement: " + std::string(name));
}

std::string to_string(Placement p) {
  switch (p) {
    case Placement::all: return "all";
    case Placement::first: return "first";
    case Placement::middle: return "middle";
    case Placement::last: return "last";
    case Placement::comb: return "comb";
  }
  return "?";
}

std::vector<std::size_t> placement_indices(Placement p, std::size_t conv_count) {
  if (conv_count == 0) throw std::invalid_argument("placement needs at least one convolution");
  std::vector<std::size_t> out;
  switch (p) {
    case Placement::all:
      for (std::size_t i = 0; i < conv_count; ++i) out.push_back(i);
      break;
    case Placement::first: out = {0}; break;
    case Placement::middle: out = {conv_count / 2}; break;
    case Placement::last: out = {conv_count - 1}; break;
    case Placement::comb:
      out = {0, conv_count / 2, conv_count - 1};
      out.erase(std::unique(out.begin(), out.end()), out.end());
      break;
  }
  return out;
}

NetworkSpec tiny4_spec(PadKind padding, Placement placement) {
  NetworkSpec spec;
  spec.padding = padding;
  spec.placement = placement;
  spec.layers = {
      {LayerKind::conv, 3, 16},  {LayerKind::relu},  {LayerKind::maxpool},
      {LayerKind::conv, 3, 32},  {LayerKind::relu},  {LayerKind::maxpool},
      {LayerKind::conv, 3, 64},  {LayerKind::relu},  {LayerKind::conv, 3, 64},
      {LayerKind::relu},         {LayerKind::maxpool}, {LayerKind::dense, 0, 128},
      {LayerKind::relu},         {LayerKind::dense, 0, 10},
  };
  return spec;
}

template <typename T>
Batch<T> Network<T>::forward(const Batch<T>& x, bool training) {
  Batch<T> cur = x;
  for (auto& l : layers_) cur = l->forward(cur, training);
  return cur;
}

template <typename T>
Batch<T> Network<T>::backward(const Batch<T>& dlogits) {
  Batch<T> cur = dlogits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

template <typename T>
std::vector<Param<T>*> Network<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& l : layers_) {
    for (Param<T>* p : l->params()) out.push_back(p);
  }
  return out;
}

template <typename T>
void Network<T>::zero_grad() {
  for (Param<T>* p : params()) std::fill(p->grad.begin(), p->grad.end(), T{});
}

template <typename T>
std::vector<Conv2D<T>*> Network<T>::convs() {
  std::vector<Conv2D<T>*> out;
  for (auto& l : layers_) {
    if (auto* c = dynamic_cast<Conv2D<T>*>(l.get())) out.push_back(c);
  }
  return out;
}

template <typename T>
std::vector<PaddingModule<T>*> Network<T>::modules() {
  std::vector<PaddingModule<T>*> out;
  for (Conv2D<T>* c : convs()) {
    if (c->module()) out.push_back(c->module());
  }
  return out;
}

template <typename T>
Network<T> build_network(const NetworkSpec& spec, std::uint64_t seed) {
  std::size_t conv_count = 0;
  for (const auto& l : spec.layers) conv_count += l.kind == LayerKind::conv;
  std::vector<std::size_t> placed;
  if (conv_count > 0) placed = placement_indices(spec.placement, conv_count);

  Rng rng(seed);
  Network<T> net;
  std::vector<std::size_t> dims = spec.input.dims();
  if (dims.size() != 3) throw std::invalid_argument("network input must be (H, W, C)");
  bool flat = false;
  std::size_t conv_index = 0;
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::conv: {
        if (flat) throw std::invalid_argument("convolution after a dense layer");
        const bool here = std::find(placed.begin(), placed.end(), conv_index) != placed.end();
        ModuleOptions opts = spec.module;
        opts.seed = spec.module.seed + 0x9E3779B97F4A7C15ULL * (conv_index + 1);
        auto conv = std::make_unique<Conv2D<T>>(l.kernel, dims[2], l.units, here ? spec.padding : PadKind::zero,
                                                opts);
        const std::size_t s = (l.kernel - 1) / 2;
        const std::size_t min_dim = here && spec.padding == PadKind::module ? 4 : (s > 0 ? 2 : 1);
        if (dims[0] < min_dim || dims[1] < min_dim) {
          throw std::invalid_argument("convolution " + std::to_string(conv_index) + " input is too small");
        }
        conv->init(rng);
        net.add(std::move(conv));
        dims[2] = l.units;
        ++conv_index;
        break;
      }
      case LayerKind::relu: net.add(std::make_unique<ReLU<T>>()); break;
      case LayerKind::maxpool:
        if (flat || dims[0] < 2 || dims[1] < 2) throw std::invalid_argument("maxpool input too small");
        net.add(std::make_unique<MaxPool2x2<T>>());
        dims[0] /= 2;
        dims[1] /= 2;
        break;
      case LayerKind::dense: {
        const std::size_t in = flat ? dims[1] : dims[0] * dims[1] * dims[2];
        auto dense = std::make_unique<Dense<T>>(in, l.units);
        dense->init(rng);
        net.add(std::move(dense));
        dims = {1, l.units, 1};
        flat = true;
        break;
      }
    }
  }
  return net;
}

#define PADMOD_INSTANTIATE(T)                                                                \
  template class Conv2D<T>;                                                                  \
  template class ReLU<T>;                                                                    \
  template class MaxPool2x2<T>;                                                              \
  template class Dense<T>;                                                                   \
  template class Network<T>;                                                                 \
  template XentResult<T> softmax_xent(const Batch<T>&, std::span<const int>);                \
  template void adam_step(AdamState<T>&, std::span<Param<T>* const>, double);                \
  template Network<T> build_network(const NetworkSpec&, std::uint64_t);

PADMOD_INSTANTIATE(float)
PADMOD_INSTANTIATE(double)

#undef PADMOD_INSTANTIATE

}  // namespace padmod
