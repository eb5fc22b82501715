// SPDX-License-Identifier: Apache-2.0

#include "padmod/data_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace padmod {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

namespace {

void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace

// --- CIFAR-10 -----------------------------------------------------------------------

std::vector<LabeledImage> parse_cifar10_records(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10 data of " + std::to_string(bytes.size()) + " bytes is not a whole number of " +
                      std::to_string(kCifarRecordBytes) + "-byte records");
  }
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  std::vector<LabeledImage> out;
  out.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw FormatError("CIFAR-10 record " + std::to_string(r) + " has label " + std::to_string(rec[0]));
    }
    std::vector<float> px(plane * 3);
    for (std::size_t k = 0; k < plane; ++k) {
      for (std::size_t c = 0; c < 3; ++c) px[k * 3 + c] = static_cast<float>(rec[1 + c * plane + k]) / 255.0f;
    }
    out.push_back({Tensor<float>(Shape{kCifarSide, kCifarSide, 3}, std::move(px)), rec[0]});
  }
  return out;
}

std::vector<LabeledImage> load_cifar10_batch(const std::string& path) {
  return parse_cifar10_records(read_file_bytes(path));
}

CifarSplit load_cifar10_dir(const std::string& dir, std::size_t train_limit, std::size_t test_limit) {
  namespace fs = std::filesystem;
  CifarSplit split;
  for (int b = 1; b <= 5; ++b) {
    if (train_limit != 0 && split.train.size() >= train_limit) break;
    const fs::path p = fs::path(dir) / ("data_batch_" + std::to_string(b) + ".bin");
    auto batch = load_cifar10_batch(p.string());
    for (auto& img : batch) {
      if (train_limit != 0 && split.train.size() >= train_limit) break;
      split.train.push_back(std::move(img));
    }
  }
  auto test = load_cifar10_batch((fs::path(dir) / "test_batch.bin").string());
  if (test_limit != 0 && test.size() > test_limit) test.resize(test_limit);
  split.test = std::move(test);
  return split;
}

// --- PPM ------------------------------------------------------------------------------

std::string encode_ppm(const Tensor<float>& image) {
  if (image.shape().rank() != 3 || image.channels() != 3) {
    throw std::invalid_argument("PPM output needs an (H, W, 3) tensor, got " + image.shape().str());
  }
  std::string out = "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  out.reserve(out.size() + image.size());
  for (float v : image.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("PPM values must lie in [0, 1]");
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::floor(static_cast<double>(v) * 255.0 + 0.5))));
  }
  return out;
}

void write_ppm(const Tensor<float>& image, const std::string& path) { write_file_bytes(path, encode_ppm(image)); }

Tensor<float> decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  // Header tokens may be separated by whitespace and '#' comments.
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  auto parse_int = [](const std::string& tok) -> long {
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (tok.empty() || *end != '\0' || v <= 0) throw FormatError("bad PPM header field '" + tok + "'");
    return v;
  };
  if (next_token() != "P6") throw FormatError("not a binary PPM (P6) file");
  const long w = parse_int(next_token());
  const long h = parse_int(next_token());
  if (parse_int(next_token()) != 255) throw FormatError("only maxval 255 PPM files are supported");
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() < pos || bytes.size() - pos < n) throw FormatError("PPM raster is truncated");
  std::vector<float> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = static_cast<float>(static_cast<std::uint8_t>(bytes[pos + i])) / 255.0f;
  return Tensor<float>(Shape{static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3}, std::move(px));
}

Tensor<float> read_ppm(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return decode_ppm(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// --- metrics CSV -------------------------------------------------------------------------

namespace {

std::string fmt6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string format_metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + r.split + "," + fmt6(r.loss) + "," + fmt6(r.accuracy) + "," +
           fmt6(r.module_mse_mean) + "," + fmt6(r.seconds) + "\n";
  }
  return out;
}

void write_metrics_csv(std::span<const MetricsRow> rows, const std::string& path) {
  write_file_bytes(path, format_metrics_csv(rows));
}

std::vector<MetricsRow> parse_metrics_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("metrics CSV has an unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw FormatError("metrics CSV row has " + std::to_string(f.size()) + " fields");
    MetricsRow r;
    r.epoch = std::stoul(f[0]);
    r.split = f[1];
    r.loss = std::strtod(f[2].c_str(), nullptr);
    r.accuracy = std::strtod(f[3].c_str(), nullptr);
    r.module_mse_mean = std::strtod(f[4].c_str(), nullptr);
    r.seconds = std::strtod(f[5].c_str(), nullptr);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return parse_metrics_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace padmod
