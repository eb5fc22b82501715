// SPDX-License-Identifier: Apache-2.0

#include "padmod/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace padmod {

double EpochStats::module_mse_mean() const {
  if (module_mse.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(module_mse.begin(), module_mse.end(), 0.0) / static_cast<double>(module_mse.size());
}

double TrainReport::last5_test_accuracy() const {
  if (epochs.empty()) return 0;
  const std::size_t n = std::min<std::size_t>(5, epochs.size());
  double sum = 0;
  for (std::size_t i = epochs.size() - n; i < epochs.size(); ++i) sum += epochs[i].test_accuracy;
  return sum / static_cast<double>(n);
}

std::vector<MetricsRow> TrainReport::metrics_rows() const {
  std::vector<MetricsRow> rows;
  for (const auto& e : epochs) {
    const double mse = e.module_mse_mean();
    rows.push_back({e.epoch, "train", e.train_loss, e.train_accuracy, mse, e.seconds});
    rows.push_back({e.epoch, "test", e.test_loss, e.test_accuracy, mse, e.seconds});
  }
  return rows;
}

namespace {

void collect(std::span<const LabeledImage> data, std::span<const std::size_t> idx, Batch<float>& x,
             std::vector<int>& y) {
  x.clear();
  y.clear();
  for (std::size_t i : idx) {
    x.push_back(data[i].pixels);
    y.push_back(data[i].label);
  }
}

}  // namespace

EvalResult evaluate(Network<float>& net, std::span<const LabeledImage> data, std::size_t batch) {
  if (data.empty()) return {};
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Batch<float> x;
  std::vector<int> y;
  double loss = 0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t end = std::min(data.size(), start + batch);
    collect(data, std::span(order).subspan(start, end - start), x, y);
    const auto r = softmax_xent(net.forward(x, false), std::span<const int>(y));
    loss += r.loss * static_cast<double>(end - start);
    correct += r.correct;
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

TrainReport train(Network<float>& net, std::span<const LabeledImage> train_set,
                  std::span<const LabeledImage> test_set, const TrainConfig& config, const EpochCallback& on_epoch) {
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  if (config.batch == 0) throw std::invalid_argument("batch size must be >= 1");
  if (config.epochs == 0) throw std::invalid_argument("epochs must be >= 1");

  using Clock = std::chrono::steady_clock;
  Rng rng(config.seed ^ 0x5DEECE66DULL);
  AdamState<float> adam;
  const auto params = net.params();
  const auto modules = net.modules();
  const auto convs = net.convs();
  std::vector<double> last_mse(modules.size(), std::numeric_limits<double>::quiet_NaN());

  if (config.freeze_after && *config.freeze_after == 0) {
    for (auto* m : modules) m->freeze();
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Batch<float> x;
  std::vector<int> y;
  TrainReport report;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    for (auto* c : convs) c->reset_pad_seconds();
    rng.shuffle(order);

    double loss_sum = 0;
    std::size_t correct = 0;
    std::vector<double> mse_sum(modules.size(), 0.0);
    std::vector<std::size_t> mse_count(modules.size(), 0);

    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      collect(train_set, std::span(order).subspan(start, end - start), x, y);

      net.zero_grad();
      const auto r = softmax_xent(net.forward(x, true), std::span<const int>(y));
      if (!std::isfinite(r.loss)) {
        throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch));
      }
      for (std::size_t k = 0; k < modules.size(); ++k) {
        if (!modules[k]->frozen() && modules[k]->last_mse()) {
          mse_sum[k] += *modules[k]->last_mse();
          ++mse_count[k];
        }
      }
      net.backward(r.dlogits);
      adam_step(adam, std::span<Param<float>* const>(params), config.lr);

      loss_sum += r.loss * static_cast<double>(end - start);
      correct += r.correct;
    }

    for (std::size_t k = 0; k < modules.size(); ++k) {
      if (mse_count[k] > 0) last_mse[k] = mse_sum[k] / static_cast<double>(mse_count[k]);
    }
    if (config.freeze_after && epoch >= *config.freeze_after) {
      for (auto* m : modules) m->freeze();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    const EvalResult test = evaluate(net, test_set, config.batch);
    stats.test_loss = test.loss;
    stats.test_accuracy = test.accuracy;
    stats.module_mse = last_mse;
    stats.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    for (auto* c : convs) stats.pad_seconds += c->pad_seconds();
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return report;
}

TrainReport train(const NetworkSpec& spec, std::span<const LabeledImage> train_set,
                  std::span<const LabeledImage> test_set, const TrainConfig& config, const EpochCallback& on_epoch) {
  Network<float> net = build_network<float>(spec, config.seed);
  return train(net, train_set, test_set, config, on_epoch);
}

}  // namespace padmod
