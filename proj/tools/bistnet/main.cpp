#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "bistnet/config.hpp"
#include "bistnet/gradcheck.hpp"
#include "bistnet/parallel.hpp"
#include "bistnet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bistnet;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

RunConfig resolve_config(const std::string& path, const std::optional<fs::path>& ckpt) {
  RunConfig config;
  if (!path.empty()) {
    config = load_config(path);
  } else if (ckpt && fs::exists(*ckpt / "config.txt")) {
    config = load_config(*ckpt / "config.txt");
  }
  if (single_threaded_env()) config.deterministic = true;
  return config;
}

int run_colorize(const fs::path& frames, const fs::path& ref_first, const std::string& ref_last, const fs::path& out,
             const std::string& config_path, const std::string& features_dir, const std::string& priors_dir,
             const std::string& ckpt) {
  const std::optional<fs::path> ckpt_dir = ckpt.empty() ? std::nullopt : std::optional<fs::path>(ckpt);
  const RunConfig config = resolve_config(config_path, ckpt_dir);
  const pipeline::Clip clip = pipeline::load_clip(
      frames, ref_first, ref_last.empty() ? std::nullopt : std::optional<fs::path>(ref_last), config.resize_standard);
  const pipeline::Model model =
      ckpt_dir ? pipeline::load_model(*ckpt_dir, config) : pipeline::initialize_model(config);
  pipeline::ColorizeOptions options;
  if (!features_dir.empty()) options.features_dir = fs::path(features_dir);
  if (!priors_dir.empty()) options.priors_dir = fs::path(priors_dir);
  const auto results = pipeline::colorize_clip(clip, model, config, options);
  pipeline::write_frames(out, results);
  std::cout << "colorized " << results.size() << " frames into " << out.string()
            << (clip.ref_b ? "" : " (single reference)") << "\n";
  return 0;
}

int run_train(const fs::path& data, const fs::path& out, const std::string& config_path) {
  const RunConfig config = resolve_config(config_path, std::nullopt);
  const pipeline::TrainResult result = pipeline::train(data, out, config);
  if (!result.history.empty()) {
    std::cout << "trained " << result.history.size() << " steps: loss " << result.history.front().report.total
              << " -> " << result.history.back().report.total << "\n";
  } else {
    std::cout << "no training steps; checkpoint holds the initialization\n";
  }
  std::cout << "checkpoint: " << (out / "checkpoint").string() << "\n";
  return 0;
}

int run_eval(const fs::path& pred, const fs::path& gt, const fs::path& report_path, const std::string& config_path) {
  const RunConfig config = resolve_config(config_path, std::nullopt);
  const metrics::EvalReport report = pipeline::evaluate(pred, gt, config.cdc);
  std::ofstream f(report_path);
  if (!f) throw Error("cannot write report " + report_path.string());
  f << report.to_json() << "\n";
  std::cout << "psnr_mean "
            << (report.psnr_mean ? std::to_string(*report.psnr_mean) : std::string("identical")) << "  ssim_mean "
            << report.ssim_mean << "  cdc " << (report.cdc ? std::to_string(*report.cdc) : std::string("n/a"))
            << "\n";
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  gradcheck::SuiteOptions options;
  options.seed = seed;
  bool ok = true;
  for (const auto& c : gradcheck::run_suite(options)) {
    std::cout << (c.passed ? "ok   " : "FAIL ") << c.name << "  max_rel_err=" << c.max_rel_error << "\n";
    ok = ok && c.passed;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << (ok ? "all gradient checks passed" : "gradient checks failed") << " in " << secs << " s\n";
  return ok ? 0 : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exemplar-based video colorization"};
  app.require_subcommand(1);

  std::string frames, ref_first, ref_last, out, config, features_dir, priors_dir, ckpt;
  auto* c = app.add_subcommand("colorize", "Colorize a grayscale clip from one or two color references");
  c->add_option("--frames", frames, "Directory of PNG frames")->required();
  c->add_option("--ref-first", ref_first, "Reference for the first frame")->required();
  c->add_option("--ref-last", ref_last, "Reference for the last frame; omit for single-reference mode");
  c->add_option("--out", out, "Output directory")->required();
  c->add_option("--config", config, "Config file");
  c->add_option("--features-dir", features_dir, "Exported feature pyramids");
  c->add_option("--priors-dir", priors_dir, "Exported segmentation and edge masks");
  c->add_option("--ckpt", ckpt, "Checkpoint directory");

  std::string data;
  auto* t = app.add_subcommand("train", "Train the refinement network");
  t->add_option("--data", data, "Data root")->required();
  t->add_option("--out", out, "Output directory")->required();
  t->add_option("--config", config, "Config file");

  std::string pred, gt, report;
  auto* e = app.add_subcommand("eval", "Score predicted frames against ground truth");
  e->add_option("--pred", pred, "Predicted PNG frames")->required();
  e->add_option("--gt", gt, "Ground-truth PNG frames")->required();
  e->add_option("--report", report, "JSON report path")->required();
  e->add_option("--config", config, "Config file (cdc.* keys)");

  std::uint64_t seed = 0;
  auto* g = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  g->add_option("--seed", seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kUsageError;
  }

  try {
    if (c->parsed()) return run_colorize(frames, ref_first, ref_last, out, config, features_dir, priors_dir, ckpt);
    if (t->parsed()) return run_train(data, out, config);
    if (e->parsed()) return run_eval(pred, gt, report, config);
    return run_gradcheck(seed);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsageError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kRuntimeError;
  }
}
