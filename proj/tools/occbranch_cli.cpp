#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "occbranch/commands.hpp"
#include "occbranch/config.hpp"
#include "occbranch/error.hpp"

namespace {

using namespace occbranch;

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> cv_group;
  std::string model;
  std::string out;
  std::string sample;
  std::vector<std::string> predictions;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig() : load_run_config(o.config_path);
  if (o.seed) c.reseed(*o.seed);
  if (o.cv_group) c.cv_group = *o.cv_group;
  c.validate();
  return c;
}

void print_report(const commands::Evaluation& eval) {
  std::printf("%-11s %-7s %15s %15s %5s\n", "method", "cond", "rmse", "r", "n");
  for (const auto& row : eval.report.rows) {
    std::printf("%-11s %-7s %7.3f+-%-6.3f %7.4f+-%-6.4f %5zu\n", metrics::to_string(row.method).c_str(),
                row.condition.c_str(), row.rmse.mean, row.rmse.std, row.r.mean, row.r.std, row.rmse.count);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occluded branch position regression and curve-fitting baseline"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { o.seed = s; },
                                         "derive every seed from this value");
  app.add_option_function<int>("--cv-group", [&](int g) { o.cv_group = g; }, "held-out cross-validation group");

  auto* gen = app.add_subcommand("generate", "render the synthetic dataset");
  gen->add_option("--out", o.out, "dataset directory");
  auto* train = app.add_subcommand("train", "train one model on the non-held-out groups");
  train->add_option("--model", o.model, "hob, seg_visible or seg_whole")->required();
  train->add_option("--out", o.out, "checkpoint directory");
  auto* predict = app.add_subcommand("predict", "regressor predictions for the held-out group");
  predict->add_option("--out", o.out, "report directory");
  auto* baseline = app.add_subcommand("baseline", "segmentation + curve fitting for the held-out group");
  baseline->add_option("--model", o.model, "seg_visible or seg_whole (default: both)");
  baseline->add_option("--out", o.out, "report directory");
  auto* evaluate = app.add_subcommand("evaluate", "score all three methods on the held-out group");
  evaluate->add_option("--out", o.out, "report directory");
  auto* render = app.add_subcommand("render", "draw ground truth and predictions over a sample");
  render->add_option("--sample", o.sample, "sample id")->required();
  render->add_option("--pred", o.predictions, "prediction target.csv (repeatable)")->required();
  render->add_option("--out", o.out, "output PNG")->required();
  auto* all = app.add_subcommand("all", "generate, train all models, evaluate");
  all->add_option("--out", o.out, "root directory for dataset, checkpoints and reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitValidation;
  }

  try {
    RunConfig config = resolve(o);
    if (gen->parsed()) {
      if (!o.out.empty()) config.dataset_dir = o.out;
      const auto manifest = commands::cmd_generate(config);
      std::printf("wrote %zu samples to %s\n", manifest.samples.size(), config.dataset_dir.c_str());
    } else if (train->parsed()) {
      if (!o.out.empty()) config.checkpoint_dir = o.out;
      const auto model = commands::parse_model(o.model);
      const History h = commands::cmd_train(config, model);
      std::printf("trained %s for %zu epochs -> %s\n", o.model.c_str(), h.size(),
                  commands::checkpoint_path(config, model).c_str());
    } else if (predict->parsed()) {
      if (!o.out.empty()) config.report_dir = o.out;
      commands::cmd_predict(config);
    } else if (baseline->parsed()) {
      if (!o.out.empty()) config.report_dir = o.out;
      if (o.model.empty()) {
        commands::cmd_baseline(config, commands::ModelKind::seg_visible);
        commands::cmd_baseline(config, commands::ModelKind::seg_whole);
      } else {
        commands::cmd_baseline(config, commands::parse_model(o.model));
      }
    } else if (evaluate->parsed()) {
      if (!o.out.empty()) config.report_dir = o.out;
      print_report(commands::cmd_evaluate(config));
    } else if (render->parsed()) {
      std::vector<std::filesystem::path> preds(o.predictions.begin(), o.predictions.end());
      commands::cmd_render(config, o.sample, preds, o.out);
    } else if (all->parsed()) {
      if (!o.out.empty()) {
        config.dataset_dir = std::filesystem::path(o.out) / "dataset";
        config.checkpoint_dir = std::filesystem::path(o.out) / "checkpoints";
        config.report_dir = std::filesystem::path(o.out) / "reports";
      }
      print_report(commands::cmd_all(config));
    }
  } catch (const DivergenceDetected& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << e.kind() << ": " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
