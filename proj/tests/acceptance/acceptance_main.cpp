// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "dyna/day_adapter.hpp"
#include "dyna/deployment.hpp"
#include "dyna/domain_synth.hpp"
#include "dyna/fft.hpp"
#include "dyna/freq_prompt.hpp"
#include "dyna/metrics.hpp"
#include "dyna/night_trainer.hpp"
#include "dyna/prompt_bank.hpp"
#include "test_util.hpp"

using namespace dyna;
using dyna::testing::grad_rel_error;
using dyna::testing::max_abs_diff;
using dyna::testing::random_grid;
using dyna::testing::readout;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(const char* id, const char* title, const Outcome& o) {
  std::printf("%s  %-5s %-34s %s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void run(const char* id, const char* title, const std::function<Outcome()>& fn) {
  try {
    report(id, title, fn());
  } catch (const std::exception& e) {
    report(id, title, {false, std::string("exception: ") + e.what()});
  }
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- AC1

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double op_worst = 0.0, loss_worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    const int stride = 1 + seed % 2;
    const RealGrid x = random_grid(rng, Shape{2, 2, 6, 6});
    const RealGrid w = random_grid(rng, Shape{3, 2, 3, 3}, -0.5, 0.5);
    const RealGrid b = random_grid(rng, Shape{1, 3, 1, 1});
    const RealGrid tc = random_grid(rng, Shape{2, 3, 6 / stride, 6 / stride}, 0.0, 1.0);
    op_worst = std::max({op_worst,
                         grad_rel_error([&](Tape& t, Var v) { return readout(conv2d(v, t.constant(w), t.constant(b), stride), tc); }, x),
                         grad_rel_error([&](Tape& t, Var v) { return readout(conv2d(t.constant(x), v, t.constant(b), stride), tc); }, w),
                         grad_rel_error([&](Tape& t, Var v) { return readout(conv2d(t.constant(x), t.constant(w), v, stride), tc); }, b)});

    const RealGrid gamma = random_grid(rng, Shape{1, 2, 1, 1}, 0.5, 1.5);
    const RealGrid beta = random_grid(rng, Shape{1, 2, 1, 1});
    const RealGrid tb = random_grid(rng, x.shape(), 0.0, 1.0);
    op_worst = std::max({op_worst,
                         grad_rel_error([&](Tape& t, Var v) { return readout(batch_norm_batch(v, t.constant(gamma), t.constant(beta)).y, tb); }, x),
                         grad_rel_error([&](Tape& t, Var v) { return readout(batch_norm_batch(t.constant(x), v, t.constant(beta)).y, tb); }, gamma),
                         grad_rel_error([&](Tape& t, Var v) { return readout(batch_norm_batch(t.constant(x), t.constant(gamma), v).y, tb); }, beta)});

    // The readout itself ends in a sigmoid; check the op alone on a linear-ish readout too.
    const RealGrid ts = random_grid(rng, x.shape(), 0.05, 0.95);
    op_worst = std::max(op_worst, grad_rel_error([&](Tape&, Var v) { return masked_bce(sigmoid(v), RealGrid::ones(ts.shape()), ts); }, x));

    const RealGrid img = random_grid(rng, Shape{1, 1, 16, 16}, 0.0, 1.0);
    const RealGrid tp = random_grid(rng, img.shape(), 0.0, 1.0);
    const RealGrid p0 = random_grid(rng, Shape{1, 1, 3, 3}, 0.7, 1.3);
    op_worst = std::max(op_worst, grad_rel_error([&](Tape&, Var p) { return readout(apply_prompt(img, p), tp); }, p0));

    // Loss level: prompt -> network -> BN statistics -> alignment against frozen warm-up targets.
    const SegModelState model = SegModelState::initialize(1, 1, 2000 + seed);
    std::vector<ChannelStats> warm;
    {
      Tape probe(false);
      const ForwardResult r = forward(model, probe.constant(apply_prompt(img, LowFreqPrompt(p0, 0.2))), BatchStats{});
      warm = warmup_statistics(1 + seed, 5.0, r.trace);
    }
    const auto align = [&](Tape&, Var p) { return prompt_alignment_loss(forward(model, apply_prompt(img, p), BatchStats{}).trace, warm); };
    loss_worst = std::max(loss_worst, grad_rel_error(align, p0, 1e-6));

    const Shape s{2, 1, 4, 4};
    const RealGrid g = random_grid(rng, s, 0.0, 1.0), te = random_grid(rng, s, 0.0, 1.0), y = random_grid(rng, s, 0.0, 1.0);
    RealGrid mask(s);
    for (Index k = 0; k < mask.size(); ++k) mask.values()[k] = rng.coin(0.6);
    loss_worst = std::max(loss_worst, grad_rel_error([&](Tape&, Var v) { return student_loss(v, g, te, y, mask); },
                                                     random_grid(rng, s, 0.05, 0.95)));
  }
  const double secs = seconds_since(t0);
  return {op_worst < 1e-5 && loss_worst < 1e-4 && secs < 60.0,
          fmt("op max %.2e (<1e-5), loss max %.2e (<1e-4), %.1f s", op_worst, loss_worst, secs)};
}

// ---------------------------------------------------------------- AC2

Outcome fourier_suite() {
  double roundtrip = 0.0, identity = 0.0, dc = 0.0, parseval = 0.0;
  Rng rng(7);
  for (Index size : {64, 63, 48, 17}) {
    const RealGrid x = random_grid(rng, Shape{1, 1, size, size}, 0.0, 1.0);
    roundtrip = std::max(roundtrip, max_abs_diff(ifft2_centered(fft2_centered(x)), x));
    identity = std::max(identity, max_abs_diff(apply_prompt(x, LowFreqPrompt::identity(x.shape(), 0.05)), x));
    RealGrid expected = x;
    expected.values() += x.values().mean();
    dc = std::max(dc, max_abs_diff(apply_prompt(x, LowFreqPrompt(RealGrid(Shape{1, 1, 1, 1}, 2.0), 0.01)), expected));
    const double e = x.values().square().sum();
    parseval = std::max(parseval, std::abs(fft2_centered(x).values().abs2().sum() / static_cast<double>(size * size) - e) / e);
  }
  const bool ok = roundtrip < 1e-9 && identity < 1e-9 && dc < 1e-9 && parseval < 1e-9;
  return {ok, fmt("roundtrip %.1e, identity %.1e, dc %.1e, parseval %.1e", roundtrip, identity, dc, parseval)};
}

// ---------------------------------------------------------------- AC3

Outcome lambda_oracle() {
  const double err = std::abs(warmup_lambda(1, 5.0) - 5.0 / 6.0);
  std::uint64_t violations = 0;
  for (std::uint64_t i = 1; i < 10000; ++i) violations += !(warmup_lambda(i + 1, 5.0) < warmup_lambda(i, 5.0));
  return {err <= 1e-15 && violations == 0, fmt("|lambda(1)-5/6| = %.1e, monotonicity violations %.0f", err, double(violations))};
}

// ---------------------------------------------------------------- AC4

Outcome mask_oracle() {
  int table_ok = 0;
  for (int bits = 0; bits < 8; ++bits) {
    const auto v = [&](int b) { return RealGrid(Shape{1, 1, 1, 1}, (bits >> b) & 1 ? 0.8 : 0.3); };
    table_ok += agreement_mask(v(0), v(1), v(2), 0.5).values()[0] == ((bits == 0 || bits == 7) ? 1.0 : 0.0);
  }
  std::size_t mismatches = 0, pixels = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Shape s{4, 1, 64, 64};
    const RealGrid y = random_grid(rng, s, 0.0, 1.0), g = random_grid(rng, s, 0.0, 1.0), t = random_grid(rng, s, 0.0, 1.0);
    const RealGrid m = agreement_mask(y, g, t, 0.5);
    for (Index k = 0; k < m.size(); ++k) {
      const bool a = y.values()[k] > 0.5, b = g.values()[k] > 0.5, c = t.values()[k] > 0.5;
      mismatches += m.values()[k] != ((a && b && c) || (!a && !b && !c) ? 1.0 : 0.0);
      ++pixels;
    }
  }
  return {table_ok == 8 && mismatches == 0, fmt("truth table %.0f/8, brute-force mismatches %.0f of %.0f px", table_ok, double(mismatches), double(pixels))};
}

// ---------------------------------------------------------------- AC5 / AC6

struct AveragingRun {
  double global_err = 0.0;
  double teacher_err = 0.0;
};

double max_rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return ((a - b).array().abs() / b.array().abs().max(1e-300)).maxCoeff();
}

AveragingRun averaging_oracle() {
  const SegModelState f0 = SegModelState::initialize(1, 1, 77);
  Rng data_rng(78);
  std::vector<DayRecord> records;
  const auto samples = gen_domain(6, target_b_spec(79));
  MemoryBank bank(40);
  WarmupSchedule sched(5.0);
  for (const auto& s : samples) records.push_back(adapt_one(f0, bank, sched, s.image, DayConfig{}));

  NightConfig cfg;
  TrioModels trio = TrioModels::from_source(f0, cfg.alpha);
  Rng rng(80);
  const Eigen::VectorXd base = f0.flatten();
  Eigen::VectorXd student_sum = base;
  std::vector<Eigen::VectorXd> globals;
  for (int it = 0; it < 37; ++it) {
    std::vector<const DayRecord*> batch;
    for (int k = 0; k < 4; ++k) batch.push_back(&records[static_cast<std::size_t>((it * 4 + k) % 6)]);
    night_iteration(trio, batch, cfg, rng);
    student_sum += trio.student.flatten();
    globals.push_back(trio.global.flatten());
  }
  AveragingRun out;
  out.global_err = max_rel(trio.global.flatten(), student_sum / 38.0);
  const double a = cfg.alpha;
  Eigen::VectorXd tea = std::pow(a, 37) * base;
  for (int k = 1; k <= 37; ++k) tea += (1 - a) * std::pow(a, 37 - k) * globals[static_cast<std::size_t>(k - 1)];
  out.teacher_err = max_rel(trio.teacher.flatten(), tea);
  return out;
}

// ---------------------------------------------------------------- AC7

Outcome bank_suite() {
  Rng rng(5);
  const auto key = [&] { return SpectralKey{random_grid(rng, Shape{1, 1, 3, 3}, 0.1, 2.0).values().matrix(), 0}; };
  const auto prompt = [&] { return LowFreqPrompt(random_grid(rng, Shape{1, 1, 3, 3}, 0.5, 1.5), 0.05); };
  bool fifo = true, topm = true, hull = true;
  double wsum = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    MemoryBank bank(40);
    const int n = 1 + static_cast<int>(rng.below(80));
    for (int k = 0; k < n; ++k) bank.push(key(), prompt());
    fifo = fifo && bank.size() == static_cast<std::size_t>(std::min(n, 40)) &&
           bank.entries().front().sequence == static_cast<std::uint64_t>(std::max(0, n - 40));
    const SpectralKey q = key();
    const auto support = bank.retrieve_support(q, 16);
    std::vector<std::pair<double, std::uint64_t>> brute;
    for (const auto& e : bank.entries()) brute.push_back({cosine_similarity(q.values, e.key.values), e.sequence});
    std::sort(brute.begin(), brute.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second > b.second; });
    brute.resize(std::min<std::size_t>(16, brute.size()));
    topm = topm && support.size() == brute.size();
    for (std::size_t k = 0; topm && k < support.size(); ++k) topm = support[k].similarity == brute[k].first;
    wsum = std::max(wsum, std::abs(support_weights(support).sum() - 1.0));
    const LowFreqPrompt init = init_prompt(support, LowFreqPrompt::identity(Shape{1, 1, 64, 64}, 0.05));
    for (Index k = 0; k < 9; ++k) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& s : support) {
        lo = std::min(lo, s.value.values().values()[k]);
        hi = std::max(hi, s.value.values().values()[k]);
      }
      hull = hull && init.values().values()[k] >= lo - 1e-12 && init.values().values()[k] <= hi + 1e-12;
    }
  }
  return {fifo && topm && hull && wsum < 1e-12,
          std::string("fifo ") + (fifo ? "ok" : "bad") + ", top-M " + (topm ? "exact" : "mismatch") + ", hull " +
              (hull ? "ok" : "violated") + fmt(", |sum w - 1| max %.1e", wsum)};
}

// ---------------------------------------------------------------- AC8

Outcome one_step_descent(const std::vector<SegModelState>& sources) {
  const auto t0 = Clock::now();
  std::size_t reduced = 0, total = 0;
  double worst_fraction = 1.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto stream = target_stream(seed, "B");
    MemoryBank bank(40);
    WarmupSchedule sched(5.0);
    DayConfig cfg;
    cfg.measure_descent = true;
    std::size_t here = 0;
    for (const auto& s : stream) {
      const DayRecord r = adapt_one(sources[seed], bank, sched, s.image, cfg);
      here += r.loss_after < r.loss_before;
    }
    reduced += here;
    total += stream.size();
    worst_fraction = std::min(worst_fraction, static_cast<double>(here) / static_cast<double>(stream.size()));
  }
  const double secs = seconds_since(t0);
  return {worst_fraction >= 0.95 && secs < 120.0,
          fmt("reduced %.0f/%.0f, worst seed %.3f (>=0.95), %.1f s", double(reduced), double(total), worst_fraction, secs)};
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  std::filesystem::path work = std::filesystem::temp_directory_path() / "dyna_acceptance";
  std::string cli;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--work-dir") == 0) work = argv[i + 1];
    if (std::strcmp(argv[i], "--cli") == 0) cli = argv[i + 1];
  }
  std::filesystem::create_directories(work);

  run("AC1", "gradient suite", gradient_suite);
  run("AC2", "fourier suite", fourier_suite);
  run("AC3", "warm-up schedule oracle", lambda_oracle);
  run("AC4", "agreement mask oracle", mask_oracle);
  AveragingRun avg;
  bool avg_ok = true;
  std::string avg_error;
  try {
    avg = averaging_oracle();
  } catch (const std::exception& e) {
    avg_ok = false;
    avg_error = e.what();
  }
  report("AC5", "global student averaging oracle",
         avg_ok ? Outcome{avg.global_err < 1e-10, fmt("max relative error %.2e after 37 iterations (<1e-10)", avg.global_err)}
                : Outcome{false, avg_error});
  report("AC6", "teacher ema oracle",
         avg_ok ? Outcome{avg.teacher_err < 1e-10, fmt("max relative error %.2e after 37 iterations (<1e-10)", avg.teacher_err)}
                : Outcome{false, avg_error});
  run("AC7", "memory bank suite", bank_suite);

  // Source models for the end-to-end criteria, one per benchmark seed.
  const auto t_train = Clock::now();
  std::vector<SegModelState> sources;
  std::vector<std::string> ckpts;
  std::vector<double> val_dice;
  try {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const BenchmarkSuite suite = benchmark_suite(seed);
      SourceTrainConfig cfg;
      cfg.seed = seed;
      sources.push_back(train_source(suite.source_train, cfg).model);
      val_dice.push_back(mean_dice(sources.back(), suite.source_val));
      ckpts.push_back((work / ("source_" + std::to_string(seed) + ".ckpt")).string());
      save_checkpoint(sources.back(), ckpts.back());
    }
  } catch (const std::exception& e) {
    std::printf("source training failed: %s\n", e.what());
    return 1;
  }
  const double train_secs = seconds_since(t_train);
  std::printf("info  source models: val dice median %.4f, %.1f s\n", median(val_dice), train_secs);

  run("AC8", "one-step prompt descent", [&] { return one_step_descent(sources); });

  // AC9: full and day-only deployments on target B, ratio 0.2, five seeds.
  std::vector<double> gain_day, gain_night, gain_offline;
  std::string ac9_detail;
  double ac9_secs = train_secs;
  const auto deploy = [&](std::uint64_t seed, double ratio, bool night, const std::string& out) {
    RunConfig cfg;
    cfg.checkpoint = ckpts[seed];
    cfg.seed = seed;
    cfg.target = "B";
    cfg.test_ratio = ratio;
    cfg.night_enabled = night;
    cfg.out_dir = out;
    const DeploymentReport r = run_deployment(cfg);
    write_report(r, out);
    return r;
  };
  run("AC9", "end-to-end direction check", [&] {
    const auto t0 = Clock::now();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const DeploymentReport full = deploy(seed, 0.2, true, (work / ("full_" + std::to_string(seed))).string());
      const DeploymentReport day = deploy(seed, 0.2, false, (work / ("day_" + std::to_string(seed))).string());
      gain_day.push_back(day.mean_dice_dyna - day.mean_dice_source_only);
      gain_night.push_back(full.mean_dice_dyna - day.mean_dice_dyna);
      gain_offline.push_back(full.offline_dice_final - full.offline_dice_source);
      std::printf("info  seed %llu: source-only %.4f  day-only %.4f  full %.4f  offline final %.4f\n",
                  static_cast<unsigned long long>(seed), full.mean_dice_source_only, day.mean_dice_dyna, full.mean_dice_dyna,
                  full.offline_dice_final);
    }
    ac9_secs += seconds_since(t0);
    const double a = median(gain_day), b = median(gain_night), c = median(gain_offline);
    return Outcome{a >= 0.02 && b >= 0.0 && c >= 0.04 && ac9_secs < 900.0,
                   fmt("median gains: day %+.4f (>=0.02), night %+.4f (>=0), offline %+.4f (>=0.04); %.0f s", a, b, c, ac9_secs)};
  });

  run("AC10", "stability across test ratios", [&] {
    std::vector<double> overall;
    for (double ratio : {0.1, 0.2, 0.5}) {
      char name[32];
      std::snprintf(name, sizeof(name), "ratio_%.1f", ratio);
      overall.push_back(deploy(0, ratio, true, (work / name).string()).mean_dice_dyna);
    }
    const double spread = *std::max_element(overall.begin(), overall.end()) - *std::min_element(overall.begin(), overall.end());
    return Outcome{spread < 0.05, fmt("dice 0.1: %.4f  0.2: %.4f  0.5: %.4f, spread %.4f (<0.05)", overall[0], overall[1], overall[2], spread)};
  });

  run("AC11", "deployment determinism", [&] {
    if (cli.empty()) return Outcome{false, "no --cli path given"};
    const std::filesystem::path out = work / "determinism";
    const std::string cmd = "\"" + cli + "\" deploy --ckpt \"" + ckpts[0] + "\" --ratio 0.2 --target B --out \"" +
                            out.string() + "\" --seed 0 > /dev/null";
    std::string csv[2], json[2];
    for (int k = 0; k < 2; ++k) {
      std::filesystem::remove_all(out);
      if (std::system(cmd.c_str()) != 0) return Outcome{false, "deploy exited with an error"};
      csv[k] = slurp(out / "samples.csv");
      json[k] = slurp(out / "summary.json");
    }
    const bool same_csv = !csv[0].empty() && csv[0] == csv[1];
    const bool same_json = !json[0].empty() && json[0] == json[1];
    return Outcome{same_csv && same_json, std::string("samples.csv ") + (same_csv ? "identical" : "differs") +
                                              ", summary.json " + (same_json ? "identical" : "differs")};
  });

  std::printf("%s: %d failing criteria\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
