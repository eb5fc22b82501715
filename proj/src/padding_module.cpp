// SPDX-License-Identifier: Apache-2.0

#include "padmod/padding_module.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <sstream>

#include "padmod/rng.hpp"

namespace padmod {

template <typename T>
BorderBundle<T>::BorderBundle(std::array<RowVec<T>, 4> r) : rows(std::move(r)) {
  if (rows[kTop].size() != rows[kBottom].size() || rows[kLeft].size() != rows[kRight].size()) {
    throw std::invalid_argument("border bundle needs len(top) == len(bottom) and len(left) == len(right)");
  }
}

template <typename T>
std::array<std::size_t, 4> BorderBundle<T>::lengths() const {
  return {rows[0].size(), rows[1].size(), rows[2].size(), rows[3].size()};
}

template <typename T>
std::size_t BorderBundle<T>::term_count() const {
  return rows[0].size() + rows[1].size() + rows[2].size() + rows[3].size();
}

template <typename T>
std::array<std::size_t, 4> PredictorBundle<T>::lengths() const {
  return {rows[0].size(), rows[1].size(), rows[2].size(), rows[3].size()};
}

// --- FilterBank ------------------------------------------------------------

template <typename T>
FilterBank<T>::FilterBank(std::size_t channels, FilterInit init, std::uint64_t seed, double learning_rate,
                          LocalOptimizer optimizer)
    : weights_(channels), moments_(channels), learning_rate_(learning_rate), optimizer_(optimizer) {
  if (channels == 0) throw std::invalid_argument("filter bank needs at least one channel");
  if (!(learning_rate > 0)) throw std::invalid_argument("local learning rate must be positive");
  Rng rng(seed);
  for (auto& w : weights_) {
    for (auto& x : w) {
      x = init == FilterInit::mean ? T(1) / T(3) : static_cast<T>(rng.uniform(-0.1, 0.1));
    }
  }
}

template <typename T>
FilterBank<T>::FilterBank(std::vector<Filter3<T>> weights, double learning_rate, LocalOptimizer optimizer)
    : weights_(std::move(weights)),
      moments_(weights_.size()),
      learning_rate_(learning_rate),
      optimizer_(optimizer) {
  if (weights_.empty()) throw std::invalid_argument("filter bank needs at least one channel");
  if (!(learning_rate > 0)) throw std::invalid_argument("local learning rate must be positive");
}

template <typename T>
const Filter3<T>& FilterBank<T>::weights(std::size_t channel) const {
  if (channel >= weights_.size()) {
    throw std::out_of_range("no filter for channel " + std::to_string(channel));
  }
  return weights_[channel];
}

template <typename T>
void FilterBank<T>::set_weights(std::size_t channel, const Filter3<T>& w) {
  if (channel >= weights_.size()) {
    throw std::out_of_range("no filter for channel " + std::to_string(channel));
  }
  weights_[channel] = w;
}

template <typename T>
void FilterBank<T>::step(std::size_t channel, const Filter3<T>& grad) {
  if (channel >= weights_.size()) {
    throw std::out_of_range("no filter for channel " + std::to_string(channel));
  }
  auto& w = weights_[channel];
  if (optimizer_ == LocalOptimizer::sgd) {
    for (int k = 0; k < 3; ++k) w[k] = static_cast<T>(w[k] - learning_rate_ * grad[k]);
  } else {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    auto& st = moments_[channel];
    ++st.steps;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.steps));
    for (int k = 0; k < 3; ++k) {
      st.m[k] = b1 * st.m[k] + (1 - b1) * grad[k];
      st.v[k] = b2 * st.v[k] + (1 - b2) * grad[k] * grad[k];
      w[k] = static_cast<T>(w[k] - learning_rate_ * (st.m[k] / c1) / (std::sqrt(st.v[k] / c2) + eps));
    }
  }
  for (T x : w) {
    if (!std::isfinite(x)) {
      throw DivergenceError("padding filter for channel " + std::to_string(channel) + " diverged");
    }
  }
}

// --- bundle construction ---------------------------------------------------

namespace {

template <typename T>
void require_min_dims(const Tensor<T>& m, std::size_t min, const char* what) {
  if (m.shape().rank() != 2) {
    throw std::invalid_argument(std::string(what) + " expects a rank-2 plane, got " + m.shape().str());
  }
  if (m.height() < min || m.width() < min) {
    throw std::invalid_argument(std::string(what) + " needs both dimensions >= " + std::to_string(min) +
                                ", got " + m.shape().str());
  }
}

template <typename T>
RowVec<T> trim_ends(RowVec<T> v) {
  return RowVec<T>(v.begin() + 1, v.end() - 1);
}

}  // namespace

template <typename T>
BorderBundle<T> extract_target(const Tensor<T>& m) {
  require_min_dims(m, 4, "extract_target");
  return extract_borders(m);
}

template <typename T>
BorderBundle<T> extract_neighbors(const Tensor<T>& m) {
  require_min_dims(m, 4, "extract_neighbors");
  const std::size_t r = m.height(), c = m.width();
  return BorderBundle<T>({trim_ends(row(m, 1)), trim_ends(row(m, r - 2)), trim_ends(col_t(m, 1)),
                          trim_ends(col_t(m, c - 2))});
}

template <typename T>
BorderBundle<T> extract_borders(const Tensor<T>& m) {
  require_min_dims(m, 2, "extract_borders");
  const std::size_t r = m.height(), c = m.width();
  return BorderBundle<T>({row(m, 0), row(m, r - 1), col_t(m, 0), col_t(m, c - 1)});
}

template <typename T>
PredictorBundle<T> build_predictor(const BorderBundle<T>& b) {
  PredictorBundle<T> p;
  for (std::size_t a = 0; a < 4; ++a) {
    if (b.rows[a].size() < 2) throw std::invalid_argument("predictor rows need length >= 2");
    p.rows[a] = zero_pad_1d(reflect_pad_1d(b.rows[a]));
  }
  return p;
}

namespace {

template <typename T>
T window(const Filter3<T>& theta, const RowVec<T>& r, std::size_t j) {
  return theta[0] * r[j] + theta[1] * r[j + 1] + theta[2] * r[j + 2];
}

template <typename T>
void require_matching(const PredictorBundle<T>& p, const BorderBundle<T>& t) {
  for (std::size_t a = 0; a < 4; ++a) {
    if (p.rows[a].size() != t.rows[a].size() + 2) {
      throw std::invalid_argument("predictor row " + std::to_string(a) + " has length " +
                                  std::to_string(p.rows[a].size()) + ", target row expects " +
                                  std::to_string(t.rows[a].size() + 2));
    }
  }
}

}  // namespace

template <typename T>
BorderBundle<T> predict_borders(const Filter3<T>& theta, const PredictorBundle<T>& p) {
  std::array<RowVec<T>, 4> out;
  for (std::size_t a = 0; a < 4; ++a) {
    const auto& r = p.rows[a];
    if (r.size() < 3) throw std::invalid_argument("predictor rows need length >= 3");
    out[a].resize(r.size() - 2);
    for (std::size_t j = 0; j < out[a].size(); ++j) out[a][j] = window(theta, r, j);
  }
  return BorderBundle<T>(std::move(out));
}

template <typename T>
BorderBundle<T> predict_borders(const FilterBank<T>& filters, const PredictorBundle<T>& p,
                                std::size_t channel) {
  return predict_borders(filters.weights(channel), p);
}

template <typename T>
Tensor<T> assemble_padded(const Tensor<T>& m, const BorderBundle<T>& o) {
  if (m.shape().rank() != 2) throw std::invalid_argument("assemble_padded expects a rank-2 plane");
  const std::size_t r = m.height(), c = m.width();
  const auto len = o.lengths();
  if (len[kTop] != c + 2 || len[kLeft] != r + 2) {
    throw std::invalid_argument("padding rows do not fit a " + m.shape().str() + " plane");
  }
  const std::size_t ow = c + 2;
  Tensor<T> out = Tensor<T>::zeros(Shape{r + 2, ow});
  // Top and bottom rows; the sides are zero apart from the interior.
  for (std::size_t j = 0; j < ow; ++j) {
    out(0, j) = o.rows[kTop][j];
    out(r + 1, j) = o.rows[kBottom][j];
  }
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out(i + 1, j + 1) = m(i, j);
  }
  // Sides are added on top, which double-counts the four corners.
  for (std::size_t i = 0; i < r + 2; ++i) {
    out(i, 0) += o.rows[kLeft][i];
    out(i, ow - 1) += o.rows[kRight][i];
  }
  out(0, 0) /= T(2);
  out(0, ow - 1) /= T(2);
  out(r + 1, 0) /= T(2);
  out(r + 1, ow - 1) /= T(2);
  return out;
}

template <typename T>
Tensor<T> pad_plane(const Tensor<T>& plane, const Filter3<T>& theta, std::size_t size) {
  Tensor<T> cur = plane;
  for (std::size_t k = 0; k < size; ++k) {
    const PredictorBundle<T> pout = build_predictor(extract_borders(cur));
    cur = assemble_padded(cur, predict_borders(theta, pout));
  }
  return cur;
}

// --- local loss -------------------------------------------------------------

template <typename T>
double local_sse(const Filter3<T>& theta, const PredictorBundle<T>& p, const BorderBundle<T>& t) {
  require_matching(p, t);
  double sum = 0;
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t j = 0; j < t.rows[a].size(); ++j) {
      const double e = static_cast<double>(window(theta, p.rows[a], j)) - t.rows[a][j];
      sum += e * e;
    }
  }
  return sum;
}

template <typename T>
double local_mse(const Filter3<T>& theta, const PredictorBundle<T>& p, const BorderBundle<T>& t) {
  const double sse = local_sse(theta, p, t);
  return sse / static_cast<double>(t.term_count());
}

template <typename T>
double local_mse(const FilterBank<T>& filters, const PredictorBundle<T>& p, const BorderBundle<T>& t,
                 std::size_t channel) {
  return local_mse(filters.weights(channel), p, t);
}

template <typename T>
std::array<double, 3> local_mse_grad(const Filter3<T>& theta, const PredictorBundle<T>& p,
                                     const BorderBundle<T>& t) {
  require_matching(p, t);
  std::array<double, 3> g{};
  for (std::size_t a = 0; a < 4; ++a) {
    const auto& r = p.rows[a];
    for (std::size_t j = 0; j < t.rows[a].size(); ++j) {
      const double e = static_cast<double>(window(theta, r, j)) - t.rows[a][j];
      g[0] += e * r[j];
      g[1] += e * r[j + 1];
      g[2] += e * r[j + 2];
    }
  }
  const double scale = 2.0 / static_cast<double>(t.term_count());
  for (double& x : g) x *= scale;
  return g;
}

template <typename T>
std::array<double, 3> local_mse_grad(const FilterBank<T>& filters, const PredictorBundle<T>& p,
                                     const BorderBundle<T>& t, std::size_t channel) {
  return local_mse_grad(filters.weights(channel), p, t);
}

// --- PaddingModule ------------------------------------------------------------

template <typename T>
PaddingModule<T>::PaddingModule(std::size_t channels, const ModuleOptions& options)
    : filters_(channels, options.init, options.seed, options.learning_rate, options.optimizer),
      pad_size_(options.pad_size) {
  if (pad_size_ == 0) throw std::invalid_argument("pad size must be >= 1");
}

template <typename T>
PaddingModule<T>::PaddingModule(FilterBank<T> filters, std::size_t pad_size)
    : filters_(std::move(filters)), pad_size_(pad_size) {
  if (pad_size_ == 0) throw std::invalid_argument("pad size must be >= 1");
}

template <typename T>
Tensor<T> PaddingModule<T>::forward(const Tensor<T>& m) {
  return std::move(forward(std::span<const Tensor<T>>(&m, 1)).front());
}

template <typename T>
std::vector<Tensor<T>> PaddingModule<T>::forward(std::span<const Tensor<T>> batch) {
  const bool train = training();
  const std::size_t min_dim = train ? 4 : 2;
  cache_.clear();
  cached_input_shape_.reset();

  std::vector<Tensor<T>> out;
  out.reserve(batch.size());
  double mse_sum = 0;
  std::size_t mse_terms = 0;
  for (const Tensor<T>& m : batch) {
    if (m.channels() != channels()) {
      throw std::invalid_argument("padding module has " + std::to_string(channels()) +
                                  " filters, input has " + std::to_string(m.channels()) + " channels");
    }
    if (m.height() < min_dim || m.width() < min_dim) {
      throw std::invalid_argument(std::string("padding module in ") + (train ? "train" : "eval") +
                                  " mode needs inputs of at least " + std::to_string(min_dim) + "x" +
                                  std::to_string(min_dim) + ", got " + m.shape().str());
    }
    if (train) {
      if (cached_input_shape_ && *cached_input_shape_ != m.shape()) {
        throw std::invalid_argument("padding module batch has mixed shapes");
      }
      cached_input_shape_ = m.shape();
    }

    std::vector<Tensor<T>> planes;
    planes.reserve(channels());
    std::vector<CachedPair> pairs;
    for (std::size_t c = 0; c < channels(); ++c) {
      Tensor<T> plane = channel_plane(m, c);
      if (train) {
        CachedPair pair{build_predictor(extract_neighbors(plane)), extract_target(plane)};
        mse_sum += local_mse(filters_, pair.predictor, pair.target, c);
        ++mse_terms;
        pairs.push_back(std::move(pair));
      }
      planes.push_back(pad_plane(plane, filters_.weights(c), pad_size_));
    }
    Tensor<T> padded = m.shape().rank() == 2 ? std::move(planes.front()) : stack_planes(planes);
    if (!padded.all_finite()) throw DivergenceError("padding module produced non-finite values");
    out.push_back(std::move(padded));
    if (train) cache_.push_back(std::move(pairs));
  }
  if (train && mse_terms > 0) last_mse_ = mse_sum / static_cast<double>(mse_terms);
  return out;
}

template <typename T>
void PaddingModule<T>::local_update() {
  if (cache_.empty()) throw std::logic_error("padding module backward called without a train-mode forward");
  const double inv_batch = 1.0 / static_cast<double>(cache_.size());
  for (std::size_t c = 0; c < channels(); ++c) {
    std::array<double, 3> mean{};
    for (const auto& sample : cache_) {
      const auto g = local_mse_grad(filters_, sample[c].predictor, sample[c].target, c);
      for (int k = 0; k < 3; ++k) mean[k] += g[k];
    }
    Filter3<T> step_grad;
    for (int k = 0; k < 3; ++k) step_grad[k] = static_cast<T>(mean[k] * inv_batch);
    filters_.step(c, step_grad);
  }
  cache_.clear();
  cached_input_shape_.reset();
}

template <typename T>
Tensor<T> PaddingModule<T>::backward(const Tensor<T>& g) {
  return std::move(backward(std::span<const Tensor<T>>(&g, 1)).front());
}

template <typename T>
std::vector<Tensor<T>> PaddingModule<T>::backward(std::span<const Tensor<T>> grads) {
  for (const Tensor<T>& g : grads) {
    if (g.channels() != channels()) {
      throw std::invalid_argument("gradient channel count does not match the padding module");
    }
    if (cached_input_shape_) {
      std::vector<std::size_t> dims = cached_input_shape_->dims();
      dims[0] += 2 * pad_size_;
      dims[1] += 2 * pad_size_;
      if (g.shape() != Shape(dims)) {
        throw std::invalid_argument("gradient shape " + g.shape().str() + " does not match padded output " +
                                    Shape(dims).str());
      }
    }
  }
  if (training()) {
    if (cache_.size() != grads.size()) {
      throw std::logic_error("padding module backward batch does not match the cached forward batch");
    }
    local_update();
  }
  std::vector<Tensor<T>> out;
  out.reserve(grads.size());
  for (const Tensor<T>& g : grads) out.push_back(interior(g, pad_size_));
  return out;
}

// --- weights file -------------------------------------------------------------

namespace {

constexpr char kMagic[] = "PADMOD1\n";
constexpr std::size_t kMagicLen = 8;

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

std::string encode_weights(const std::vector<Filter3<float>>& weights) {
  std::string s(kMagic, kMagicLen);
  put_u32(s, static_cast<std::uint32_t>(weights.size()));
  for (const auto& w : weights) {
    for (float x : w) put_u32(s, std::bit_cast<std::uint32_t>(x));
  }
  return s;
}

std::vector<Filter3<float>> decode_weights(std::istream& in) {
  char magic[kMagicLen];
  if (!in.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw std::runtime_error("weights: bad magic, expected PADMOD1");
  }
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) throw std::runtime_error("weights: truncated channel count");
  const std::uint32_t channels = get_u32(buf);
  if (channels == 0) throw std::runtime_error("weights: zero channels");
  std::vector<Filter3<float>> out(channels);
  for (auto& w : out) {
    for (float& x : w) {
      if (!in.read(reinterpret_cast<char*>(buf), 4)) throw std::runtime_error("weights: truncated filter data");
      x = std::bit_cast<float>(get_u32(buf));
    }
  }
  return out;
}

void write_weights_file(const std::string& path, const std::vector<std::vector<Filter3<float>>>& blocks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& b : blocks) {
    const std::string bytes = encode_weights(b);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<std::vector<Filter3<float>>> read_weights_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weights file " + path);
  std::vector<std::vector<Filter3<float>>> blocks;
  while (in.peek() != std::char_traits<char>::eof()) blocks.push_back(decode_weights(in));
  if (blocks.empty()) throw std::runtime_error("weights file " + path + " is empty");
  return blocks;
}

#define PADMOD_INSTANTIATE(T)                                                                            \
  template struct BorderBundle<T>;                                                                       \
  template struct PredictorBundle<T>;                                                                    \
  template class FilterBank<T>;                                                                          \
  template class PaddingModule<T>;                                                                       \
  template BorderBundle<T> extract_target(const Tensor<T>&);                                             \
  template BorderBundle<T> extract_neighbors(const Tensor<T>&);                                          \
  template BorderBundle<T> extract_borders(const Tensor<T>&);                                            \
  template PredictorBundle<T> build_predictor(const BorderBundle<T>&);                                   \
  template BorderBundle<T> predict_borders(const Filter3<T>&, const PredictorBundle<T>&);                \
  template BorderBundle<T> predict_borders(const FilterBank<T>&, const PredictorBundle<T>&, std::size_t); \
  template Tensor<T> assemble_padded(const Tensor<T>&, const BorderBundle<T>&);                          \
  template Tensor<T> pad_plane(const Tensor<T>&, const Filter3<T>&, std::size_t);                        \
  template double local_sse(const Filter3<T>&, const PredictorBundle<T>&, const BorderBundle<T>&);       \
  template double local_mse(const Filter3<T>&, const PredictorBundle<T>&, const BorderBundle<T>&);       \
  template double local_mse(const FilterBank<T>&, const PredictorBundle<T>&, const BorderBundle<T>&,     \
                            std::size_t);                                                                \
  template std::array<double, 3> local_mse_grad(const Filter3<T>&, const PredictorBundle<T>&,            \
                                                const BorderBundle<T>&);                                 \
  template std::array<double, 3> local_mse_grad(const FilterBank<T>&, const PredictorBundle<T>&,         \
                                                const BorderBundle<T>&, std::size_t);

PADMOD_INSTANTIATE(float)
PADMOD_INSTANTIATE(double)

#undef PADMOD_INSTANTIATE

}  // namespace padmod
