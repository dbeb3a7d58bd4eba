#include <cstdio>
#include <iostream>
#include <optional>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "dyna/config.hpp"
#include "dyna/deployment.hpp"
#include "dyna/domain_synth.hpp"
#include "dyna/metrics.hpp"
#include "dyna/segnet.hpp"
#include "dyna/selftest.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInvariant = 3 };

int cmd_train_source(const std::string& out, std::uint64_t seed, int epochs) {
  const dyna::BenchmarkSuite suite = dyna::benchmark_suite(seed);
  dyna::SourceTrainConfig cfg;
  cfg.seed = seed;
  if (epochs > 0) cfg.epochs = epochs;
  const dyna::SourceTrainResult result = dyna::train_source(suite.source_train, cfg);
  dyna::save_checkpoint(result.model, out);
  std::printf("final train loss %.6f\n", result.epoch_losses.back());
  std::printf("source val dice  %.4f\n", dyna::mean_dice(result.model, suite.source_val));
  return kOk;
}

int cmd_deploy(const dyna::RunConfig& cfg) {
  dyna::DeploymentState state;
  const dyna::DeploymentReport report = dyna::run_deployment(cfg, &state);
  dyna::write_report(report, cfg.out_dir);
  dyna::save_state(state, cfg.out_dir + "/state.dyns");
  dyna::save_checkpoint(state.model, cfg.out_dir + "/final.ckpt");
  std::printf("online dice   dyna %.4f  source-only %.4f\n", report.mean_dice_dyna, report.mean_dice_source_only);
  std::printf("offline dice  final %.4f  source %.4f\n", report.offline_dice_final, report.offline_dice_source);
  return kOk;
}

int cmd_eval(const std::string& ckpt, const std::string& target, std::uint64_t seed) {
  const dyna::SegModelState model = dyna::load_checkpoint(ckpt);
  std::printf("offline dice on %s: %.4f\n", target.c_str(), dyna::mean_dice(model, dyna::target_stream(seed, target)));
  return kOk;
}

int cmd_selftest(std::uint64_t seed) {
  bool ok = true;
  for (const dyna::CheckResult& r : dyna::run_selftest(seed)) {
    std::printf("%s  %-24s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? kOk : kInvariant;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates many multi-megabyte temporaries; keep them off mmap.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  CLI::App app{"Day-night test-time adaptation harness on a synthetic segmentation benchmark"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out, ckpt, target = "B", config_path;
  int epochs = 0;

  auto* train = app.add_subcommand("train-source", "Train the source model and write a checkpoint");
  train->add_option("--out", out, "Checkpoint path")->required();
  train->add_option("--seed", seed, "Benchmark / training seed");
  train->add_option("--epochs", epochs, "Override the number of training epochs");

  double ratio = 0.2;
  bool no_night = false, warmup_infer = false, binarize = false, encoder_only = false;
  auto* deploy = app.add_subcommand("deploy", "Run the day-night deployment loop on a target stream");
  deploy->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* ckpt_opt = deploy->add_option("--ckpt", ckpt, "Source checkpoint");
  auto* ratio_opt = deploy->add_option("--ratio", ratio, "Test data ratio per day")->check(CLI::IsMember({0.1, 0.2, 0.5}));
  auto* target_opt = deploy->add_option("--target", target, "Target stream")->check(CLI::IsMember({"A", "B"}));
  auto* out_opt = deploy->add_option("--out", out, "Report directory");
  auto* seed_opt = deploy->add_option("--seed", seed, "Stream and night seed");
  deploy->add_flag("--no-night", no_night, "Skip night-time training");
  deploy->add_flag("--infer-with-warmup", warmup_infer, "Normalize day inference with warm-up statistics");
  deploy->add_flag("--binarize-pseudo", binarize, "Threshold pseudo-labels before night training");
  deploy->add_flag("--encoder-only-loss", encoder_only, "Restrict the alignment loss to encoder BN layers");

  auto* eval = app.add_subcommand("eval", "Offline Dice of a checkpoint on a target stream");
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--target", target, "Target stream")->check(CLI::IsMember({"A", "B"}));
  eval->add_option("--seed", seed, "Stream seed");

  auto* selftest = app.add_subcommand("selftest", "Run the invariant suite");
  selftest->add_option("--seed", seed, "Seed for random inputs");

  auto* dump = app.add_subcommand("dump-data", "Write the benchmark streams as sample files");
  dump->add_option("--out", out, "Output directory")->required();
  dump->add_option("--seed", seed, "Benchmark seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train_source(out, seed, epochs);
    if (*eval) return cmd_eval(ckpt, target, seed);
    if (*selftest) return cmd_selftest(seed);
    if (*dump) {
      const dyna::BenchmarkSuite suite = dyna::benchmark_suite(seed);
      dyna::dump_dataset(suite.source_train, out + "/source_train");
      dyna::dump_dataset(suite.source_val, out + "/source_val");
      dyna::dump_dataset(suite.target_a, out + "/target_a");
      dyna::dump_dataset(suite.target_b, out + "/target_b");
      return kOk;
    }
    dyna::RunConfig cfg;
    if (!config_path.empty()) cfg = dyna::load_config(config_path);
    if (*ckpt_opt) cfg.checkpoint = ckpt;
    if (*ratio_opt) cfg.test_ratio = ratio;
    if (*target_opt) cfg.target = target;
    if (*out_opt) cfg.out_dir = out;
    if (*seed_opt) cfg.seed = seed;
    if (no_night) cfg.night_enabled = false;
    if (warmup_infer) cfg.day.infer_with_warmup = true;
    if (binarize) cfg.night.binarize_pseudo = true;
    if (encoder_only) cfg.day.encoder_only_loss = true;
    if (cfg.checkpoint.empty() || cfg.out_dir.empty()) {
      std::cerr << "deploy: --ckpt and --out are required (on the command line or in --config)\n";
      return kUsage;
    }
    return cmd_deploy(cfg);
  } catch (const dyna::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const dyna::InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
