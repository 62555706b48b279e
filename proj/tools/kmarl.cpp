// Command-line driver: train, evaluate, sweep, oracle-gap, describe-config, render.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kmarl/harness/config_io.hpp"
#include "kmarl/harness/experiments.hpp"

namespace fs = std::filesystem;
using namespace kmarl;
using namespace kmarl::harness;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs";
  std::optional<std::string> mixer;
  std::optional<std::size_t> jobs;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON experiment config (defaults when omitted)");
  cmd->add_option("--seed", f.seed, "Run only this seed");
  cmd->add_option("--out-dir", f.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--mixer", f.mixer, "Restrict to one mixer")
      ->check(CLI::IsMember({"vdn", "qmix", "kmarl"}));
  cmd->add_option("--jobs", f.jobs, "Parallel cells (1 = single-threaded reference mode)");
}

ExperimentSpec resolve(const CommonFlags& f) {
  ExperimentSpec spec = f.config.empty() ? ExperimentSpec{} : load_spec(f.config);
  if (f.seed) spec.seeds = {*f.seed};
  if (f.mixer) {
    spec.mixers = {mixers::parse_mixer_kind(*f.mixer)};
    spec.train.mixer.kind = spec.mixers.front();
  }
  if (f.jobs) spec.jobs = *f.jobs;
  spec.validate();
  return spec;
}

int report(const std::vector<std::string>& failures) {
  for (const auto& f : failures) std::cerr << "failed: " << f << "\n";
  return failures.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent computation offloading: training and evaluation"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, sweep_f, gap_f;
  auto* train = app.add_subcommand("train", "Train every (mixer, seed) cell on the configured world");
  add_common(train, train_f);

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint against the baselines");
  add_common(evaluate, eval_f);
  std::string eval_ckpt;
  std::optional<std::size_t> eval_count;
  evaluate->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  evaluate->add_option("--vehicles", eval_count, "Evaluate at this vehicle count");

  auto* sweep = app.add_subcommand("sweep", "Latency against vehicle count");
  add_common(sweep, sweep_f);

  auto* gap = app.add_subcommand("oracle-gap", "Compare against the exact per-slot optimum");
  add_common(gap, gap_f);
  std::optional<std::string> gap_ckpt;
  gap->add_option("--checkpoint", gap_ckpt, "Learned policy to include");

  auto* describe = app.add_subcommand("describe-config", "Print every config key with its default");

  auto* render = app.add_subcommand("render", "Render a harness CSV as an SVG line chart");
  std::string render_in, render_out;
  render->add_option("csv", render_in, "Input CSV")->required()->check(CLI::ExistingFile);
  render->add_option("--out", render_out, "Output SVG (default: alongside the CSV)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*describe) {
      std::cout << describe_config();
      return 0;
    }
    if (*render) {
      const fs::path out = render_out.empty() ? fs::path(render_in).replace_extension(".svg") : fs::path(render_out);
      render_csv(render_in, out);
      std::cout << out.string() << "\n";
      return 0;
    }
    if (*train) {
      const ExperimentSpec spec = resolve(train_f);
      const auto r = run_convergence(spec, train_f.out_dir);
      std::cout << read_text(fs::path(train_f.out_dir) / "summary.csv");
      return report(r.failures);
    }
    if (*evaluate) {
      ExperimentSpec spec = resolve(eval_f);
      if (eval_count) spec.env.num_vehicles = *eval_count;
      std::cout << evaluate_checkpoint(spec, eval_ckpt, eval_f.out_dir).str();
      return 0;
    }
    if (*sweep) {
      const ExperimentSpec spec = resolve(sweep_f);
      const auto r = run_scalability(spec, sweep_f.out_dir);
      std::cout << read_text(fs::path(sweep_f.out_dir) / "latency.csv");
      return report(r.failures);
    }
    if (*gap) {
      const ExperimentSpec spec = resolve(gap_f);
      std::optional<fs::path> ck;
      if (gap_ckpt) ck = *gap_ckpt;
      const auto r = run_oracle_gap(spec, ck, gap_f.out_dir);
      std::printf("exact %.9g  greedy %.9g (gap %.4f)", r.exact, r.greedy, r.greedy_gap());
      if (ck) std::printf("  learned %.9g (gap %.4f)", r.learned, r.learned_gap());
      std::printf("\n");
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
