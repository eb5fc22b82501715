// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>

#include "padmod/baseline_padding.hpp"
#include "padmod/data_io.hpp"
#include "padmod/gradcheck.hpp"
#include "padmod/padding_module.hpp"
#include "padmod/train.hpp"

namespace padmod::cli {

namespace {

struct PadArgs {
  std::string input, method, weights, output;
  std::size_t size = 0;
};

struct TrainArgs {
  std::string data, padding = "module", positions = "all", metrics, save_weights;
  std::string module_init = "mean", module_optimizer = "sgd";
  std::size_t epochs = 10, batch = 64, train_limit = 5000, test_limit = 1000;
  std::uint64_t seed = 0;
  double lr = 1e-3, module_lr = 0.01;
  std::optional<std::size_t> freeze_after;
};

struct GradcheckArgs {
  std::size_t trials = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

int cmd_pad(const PadArgs& a, std::ostream& out, std::ostream& err) {
  const PadKind kind = parse_pad_kind(a.method);
  if (kind == PadKind::module && a.weights.empty()) {
    err << "error: --method module requires --weights\n";
    return kExitUsage;
  }
  if (kind != PadKind::module && !a.weights.empty()) {
    err << "error: --weights is only valid with --method module\n";
    return kExitUsage;
  }
  const Tensor<float> image = read_ppm(a.input);
  Tensor<float> padded;
  if (kind == PadKind::module) {
    const auto blocks = read_weights_file(a.weights);
    if (blocks.front().size() != image.channels()) {
      throw std::invalid_argument("weights hold " + std::to_string(blocks.front().size()) + " filters, image has " +
                                  std::to_string(image.channels()) + " channels");
    }
    PaddingModule<float> module(FilterBank<float>(blocks.front()), a.size);
    module.set_mode(Mode::eval);
    padded = module.forward(image);
  } else {
    padded = pad_fixed(image, PadMethod{kind, a.size});
  }
  // Learned extrapolation may leave the displayable range.
  for (float& v : padded.data()) v = std::clamp(v, 0.0f, 1.0f);
  write_ppm(padded, a.output);
  out << "padded " << image.shape().str() << " -> " << padded.shape().str() << " (" << to_string(kind) << ", size "
      << a.size << ")\n";
  return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const PadKind padding = parse_pad_kind(a.padding);
  if (padding != PadKind::zero && padding != PadKind::mean_interp && padding != PadKind::module) {
    err << "error: --padding must be zero, meaninterp or module\n";
    return kExitUsage;
  }
  NetworkSpec spec = tiny4_spec(padding, parse_placement(a.positions));
  spec.module.learning_rate = a.module_lr;
  spec.module.init = a.module_init == "uniform" ? FilterInit::uniform : FilterInit::mean;
  spec.module.optimizer = a.module_optimizer == "adam" ? LocalOptimizer::adam : LocalOptimizer::sgd;
  spec.module.seed = a.seed;

  const CifarSplit data = load_cifar10_dir(a.data, a.train_limit, a.test_limit);
  out << "data: " << data.train.size() << " train / " << data.test.size() << " test images\n";

  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch = a.batch;
  cfg.seed = a.seed;
  cfg.lr = a.lr;
  cfg.freeze_after = a.freeze_after;

  Network<float> net = build_network<float>(spec, cfg.seed);
  out << std::fixed;
  const TrainReport report = train(net, data.train, data.test, cfg, [&](const EpochStats& e) {
    out << "epoch " << e.epoch << ": train loss " << std::setprecision(4) << e.train_loss << " acc "
        << e.train_accuracy << " | test loss " << e.test_loss << " acc " << e.test_accuracy;
    if (!e.module_mse.empty()) out << " | module mse " << std::setprecision(6) << e.module_mse_mean();
    out << " | " << std::setprecision(1) << e.seconds << " s\n";
    out.flush();
  });

  if (!a.metrics.empty()) write_metrics_csv(report.metrics_rows(), a.metrics);
  if (!a.save_weights.empty()) {
    std::vector<std::vector<Filter3<float>>> blocks;
    for (auto* m : net.modules()) blocks.push_back(m->filters().all_weights());
    if (blocks.empty()) {
      err << "warning: no padding modules in this network, --save-weights skipped\n";
    } else {
      write_weights_file(a.save_weights, blocks);
    }
  }

  double seconds = 0, pad_seconds = 0;
  for (const auto& e : report.epochs) {
    seconds += e.seconds;
    pad_seconds += e.pad_seconds;
  }
  out << std::setprecision(4) << "last-5-epoch mean test accuracy: " << report.last5_test_accuracy() << "\n";
  out << std::setprecision(1) << "padding overhead: " << 100.0 * pad_seconds / std::max(seconds, 1e-12)
      << "% of " << seconds << " s wall clock\n";
  return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream&) {
  std::vector<SuiteResult> suites;
  suites.push_back(run_module_gradient_suite(a.trials, a.tol, a.seed));
  for (auto& s : run_layer_gradient_suites(a.trials, a.tol, a.seed)) suites.push_back(std::move(s));

  bool ok = true;
  const SuiteResult* worst = nullptr;
  out << std::scientific << std::setprecision(3);
  for (const auto& s : suites) {
    out << (s.report.passed() ? "PASS " : "FAIL ") << s.name << ": " << s.report.checked
        << " components, max rel err " << s.report.max_rel_error << " (tol " << a.tol << ")\n";
    ok = ok && s.report.passed();
    if (!worst || s.report.max_rel_error > worst->report.max_rel_error) worst = &s;
  }
  if (!ok) out << "worst offender: " << worst->name << ", " << worst->worst_case << "\n";
  return ok ? kExitOk : kExitContract;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trainable padding module: padding, training and gradient checks", "padmod"};
  app.require_subcommand(1);

  PadArgs pad;
  auto* pad_cmd = app.add_subcommand("pad", "Pad a PPM image with one of the padding methods");
  pad_cmd->add_option("--input", pad.input, "Input P6 PPM")->required()->check(CLI::ExistingFile);
  pad_cmd->add_option("--method", pad.method, "Padding method")
      ->required()
      ->check(CLI::IsMember({"zero", "reflect", "replicate", "meaninterp", "module"}));
  pad_cmd->add_option("--size", pad.size, "Padding size in pixels")->required()->check(CLI::PositiveNumber);
  pad_cmd->add_option("--weights", pad.weights, "Padding-module weights file (method=module)")
      ->check(CLI::ExistingFile);
  pad_cmd->add_option("--output", pad.output, "Output P6 PPM")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the tiny4 CIFAR-10 classifier");
  train_cmd->add_option("--data", tr.data, "Directory holding the CIFAR-10 binary batches")
      ->required()
      ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--padding", tr.padding, "Padding for the selected convolutions")
      ->check(CLI::IsMember({"zero", "meaninterp", "module"}))
      ->capture_default_str();
  train_cmd->add_option("--positions", tr.positions, "Convolutions that use --padding")
      ->check(CLI::IsMember({"all", "first", "middle", "last", "comb"}))
      ->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--batch", tr.batch)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--seed", tr.seed)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--module-lr", tr.module_lr, "Padding-module local learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--module-init", tr.module_init, "Padding filter init")
      ->check(CLI::IsMember({"mean", "uniform"}))
      ->capture_default_str();
  train_cmd->add_option("--module-optimizer", tr.module_optimizer, "Padding-module local optimizer")
      ->check(CLI::IsMember({"sgd", "adam"}))
      ->capture_default_str();
  train_cmd->add_option("--freeze-after", tr.freeze_after, "Stop training padding modules after N epochs");
  train_cmd->add_option("--train-limit", tr.train_limit, "First N training records (0 = all)")
      ->capture_default_str();
  train_cmd->add_option("--test-limit", tr.test_limit, "First N test records (0 = all)")->capture_default_str();
  train_cmd->add_option("--metrics", tr.metrics, "Metrics CSV output");
  train_cmd->add_option("--save-weights", tr.save_weights, "Write learned padding filters");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference checks of every backward pass");
  gc_cmd->add_option("--trials", gc.trials)->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_option("--tol", gc.tol)->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_option("--seed", gc.seed)->capture_default_str();

  auto* version_cmd = app.add_subcommand("version", "Print the version");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*pad_cmd) return cmd_pad(pad, out, err);
    if (*train_cmd) return cmd_train(tr, out, err);
    if (*gc_cmd) return cmd_gradcheck(gc, out, err);
    if (*version_cmd) {
      out << "padmod " << kVersion << "\n";
      return kExitOk;
    }
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitContract;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitContract;
  }
  return kExitUsage;
}

}  // namespace padmod::cli
