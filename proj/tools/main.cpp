#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>

#include "expert/errors.hpp"
#include "expert/harness/checkpoint.hpp"
#include "expert/harness/reports.hpp"
#include "expert/harness/run_config_json.hpp"
#include "expert/harness/synthetic.hpp"
#include "expert/harness/trainer.hpp"
#include "expert/peft.hpp"

namespace fs = std::filesystem;
using namespace expert;

namespace {

void print_param_table(const peft::TrainedParamReport& report) {
  std::size_t width = 5;  // "total"
  for (const auto& g : report.groups) width = std::max(width, g.name.size());
  std::cout << std::left << std::setw(static_cast<int>(width) + 2) << "group" << std::right
            << std::setw(14) << "count" << std::setw(14) << "bytes_fp32" << '\n';
  for (const auto& g : report.groups) {
    std::cout << std::left << std::setw(static_cast<int>(width) + 2) << g.name << std::right
              << std::setw(14) << g.count << std::setw(14) << g.count * 4 << '\n';
  }
  std::cout << std::left << std::setw(static_cast<int>(width) + 2) << "total" << std::right
            << std::setw(14) << report.total << std::setw(14) << report.bytes_fp32 << '\n';
}

std::string param_report_json(const peft::TrainedParamReport& report) {
  nlohmann::json j;
  j["groups"] = nlohmann::json::array();
  for (const auto& g : report.groups) {
    j["groups"].push_back({{"name", g.name}, {"count", g.count}, {"bytes_fp32", g.count * 4}});
  }
  j["total"] = report.total;
  j["bytes_fp32"] = report.bytes_fp32;
  return j.dump(2);
}

void print_metrics(const metrics::MetricsReport& r) {
  std::cout << std::setprecision(6) << std::fixed;
  std::cout << "images      " << r.n_images << " (" << r.n_empty_gt << " without foreground)\n"
            << "mae         " << r.mae << '\n'
            << "max_f       " << r.max_f << '\n'
            << "max_e       " << r.max_e << '\n'
            << "s_measure   " << r.s << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parameter-efficient salient-object-detection workbench"};
  app.require_subcommand(1);

  std::string train_config;
  CLI::App* train = app.add_subcommand("train", "train from a run-config JSON file");
  train->add_option("--config", train_config, "run config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);

  std::string eval_ckpt, eval_data, eval_out;
  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
  evaluate->add_option("--checkpoint", eval_ckpt, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--data", eval_data, "dataset root (images/, masks/)")
      ->required()
      ->check(CLI::ExistingDirectory);
  evaluate->add_option("--out", eval_out, "report directory (default: <checkpoint dir>/eval)");

  std::string pred_ckpt, pred_image, pred_out;
  CLI::App* predict = app.add_subcommand("predict", "write the saliency map of one image");
  predict->add_option("--checkpoint", pred_ckpt, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--image", pred_image, "input image")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", pred_out, "output image path")->required();

  std::string params_config;
  bool params_json = false;
  CLI::App* params = app.add_subcommand("params", "report trainable parameter counts");
  params->add_option("--config", params_config, "run config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  params->add_flag("--json", params_json, "emit JSON instead of the text table");

  std::string curves_report, curves_out;
  CLI::App* curves = app.add_subcommand("curves", "regenerate curve CSVs from a report");
  curves->add_option("--report", curves_report, "report.json from evaluate")
      ->required()
      ->check(CLI::ExistingFile);
  curves->add_option("--out", curves_out, "output directory")->required();

  std::string data_out;
  int data_count = 60;
  int data_resolution = 64;
  std::uint64_t data_seed = 7;
  CLI::App* make_data = app.add_subcommand("make-data", "generate a synthetic blob dataset");
  make_data->add_option("--out", data_out, "dataset root to create")->required();
  make_data->add_option("--count", data_count, "number of image/mask pairs");
  make_data->add_option("--resolution", data_resolution, "square image side");
  make_data->add_option("--seed", data_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const RunConfig config = harness::load_run_config(train_config);
      const int every = std::max(1, config.train.log_every);
      const auto outs = harness::run_training(config, [&](const harness::StepLog& log) {
        if (log.step % every == 0 || log.step == config.train.steps) {
          std::cout << "step " << log.step << "  bce " << std::setprecision(6) << std::fixed
                    << log.loss.bce << "  iou " << log.loss.iou << "  total " << log.loss.total
                    << '\n';
        }
      });
      std::cout << "checkpoint: " << outs.checkpoint_path.string() << '\n'
                << "loss log:   " << outs.loss_csv_path.string() << '\n';
    } else if (evaluate->parsed()) {
      const harness::Checkpoint ckpt = harness::load_checkpoint(eval_ckpt);
      const fs::path out =
          eval_out.empty() ? fs::path(eval_ckpt).parent_path() / "eval" : fs::path(eval_out);
      const auto res = harness::run_evaluation(ckpt, eval_data, out);
      print_metrics(res.report);
      std::cout << "report:     " << res.report_path.string() << '\n';
    } else if (predict->parsed()) {
      const harness::Checkpoint ckpt = harness::load_checkpoint(pred_ckpt);
      harness::run_prediction(ckpt, pred_image, pred_out);
      std::cout << "wrote " << pred_out << '\n';
    } else if (params->parsed()) {
      const RunConfig config = harness::load_run_config(params_config);
      const peft::TrainedParamReport report = peft::count_trained_params(config);
      if (params_json) {
        std::cout << param_report_json(report) << '\n';
      } else {
        print_param_table(report);
      }
    } else if (curves->parsed()) {
      const metrics::MetricsReport report = harness::read_metrics_report(curves_report);
      fs::create_directories(curves_out);
      harness::write_fm_curve_csv(fs::path(curves_out) / "fm_curve.csv", report);
      harness::write_pr_curve_csv(fs::path(curves_out) / "pr_curve.csv", report);
      std::cout << "wrote " << (fs::path(curves_out) / "fm_curve.csv").string() << " and "
                << (fs::path(curves_out) / "pr_curve.csv").string() << '\n';
    } else if (make_data->parsed()) {
      harness::write_blob_dataset(data_out, data_count, data_resolution, data_seed);
      std::cout << "wrote " << data_count << " pairs under " << data_out << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
