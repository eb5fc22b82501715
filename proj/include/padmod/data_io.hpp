// SPDX-License-Identifier: Apache-2.0
//
// CIFAR-10 binary batches in, PPM images and CSV metrics out.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "padmod/tensor.hpp"

namespace padmod {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabeledImage {
  Tensor<float> pixels;  ///< (32, 32, 3), values in [0, 1]
  int label = 0;
};

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;

/// Parses concatenated 3073-byte records (label byte, then the R, G and B
/// planes row-major). Throws FormatError on a partial record or a label > 9.
std::vector<LabeledImage> parse_cifar10_records(std::span<const std::uint8_t> bytes);

std::vector<LabeledImage> load_cifar10_batch(const std::string& path);

struct CifarSplit {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
};

/// Reads data_batch_1..5.bin and test_batch.bin from `dir`, keeping the first
/// `train_limit` / `test_limit` records in file order (0 keeps everything).
CifarSplit load_cifar10_dir(const std::string& dir, std::size_t train_limit = 0, std::size_t test_limit = 0);

/// Binary P6, maxval 255, each value mapped to floor(v * 255 + 0.5).
std::string encode_ppm(const Tensor<float>& image);
void write_ppm(const Tensor<float>& image, const std::string& path);

/// Reads a binary P6 file with maxval 255; values scaled by 1/255.
Tensor<float> decode_ppm(std::string_view bytes);
Tensor<float> read_ppm(const std::string& path);

struct MetricsRow {
  std::size_t epoch = 0;
  std::string split;  ///< "train" or "test"
  double loss = 0;
  double accuracy = 0;
  double module_mse_mean = 0;  ///< NaN when no padding module reported one
  double seconds = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline constexpr const char* kMetricsHeader = "epoch,split,loss,accuracy,module_mse_mean,seconds";

std::string format_metrics_csv(std::span<const MetricsRow> rows);
void write_metrics_csv(std::span<const MetricsRow> rows, const std::string& path);
std::vector<MetricsRow> parse_metrics_csv(std::string_view text);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

}  // namespace padmod
