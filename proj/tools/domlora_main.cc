// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// domlora: probe module sensitivity, validate the PAGE identities, and train
// placement strategies on a toy transformer.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "domlora/commands.h"
#include "domlora/config.h"

namespace fs = std::filesystem;
using namespace domlora;

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::optional<std::size_t> trials;
  std::string restrict_kind;
  std::optional<std::size_t> workers;
  bool deterministic = false;
  bool inject_fault = false;
  std::string task;
  std::optional<std::size_t> count;
  std::string init;
  std::string mode;
  std::string manifest;
};

void AddRunFlags(CLI::App* cmd, GlobalFlags& f) {
  cmd->add_option("--config", f.config, "INI run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Override [run] seed");
  cmd->add_option("--out-dir", f.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--trials", f.trials, "Monte Carlo trial count for every estimator");
  cmd->add_option("--restrict-kind", f.restrict_kind,
                  "Dominant-module kind restriction (q,k,v,o,up,gate,down,none)");
  cmd->add_option("--workers", f.workers, "Worker threads for per-sample and trial jobs");
  cmd->add_flag("--deterministic", f.deterministic,
                "Fixed reduction order (always on; recorded in the manifest)");
}

std::string AbsolutePath(const std::string& p, const fs::path& base) {
  if (p.empty()) return p;
  const fs::path path(p);
  return (path.is_absolute() ? path : fs::absolute(base / path)).lexically_normal().string();
}

RunConfig BuildConfig(const GlobalFlags& f) {
  RunConfig cfg;
  fs::path base = fs::current_path();
  if (!f.config.empty()) {
    cfg = RunConfig::Load(f.config);
    base = fs::absolute(f.config).parent_path();
  }
  cfg.checkpoint = AbsolutePath(cfg.checkpoint, base);
  cfg.probe_set = AbsolutePath(cfg.probe_set, base);
  if (f.seed) cfg.seed = *f.seed;
  if (f.trials) {
    cfg.page_trials = *f.trials;
    cfg.validate_page_trials = *f.trials;
    cfg.moment_trials = *f.trials;
  }
  if (!f.restrict_kind.empty()) {
    if (f.restrict_kind == "none") {
      cfg.restrict_kind.reset();
    } else if (auto k = ParseKind(f.restrict_kind)) {
      cfg.restrict_kind = *k;
    } else {
      throw ConfigError({"--restrict-kind: unknown kind '" + f.restrict_kind + "'"});
    }
  }
  if (f.workers) cfg.workers = *f.workers;
  if (f.deterministic) cfg.deterministic = true;
  if (!f.task.empty()) {
    if (!ParseTask(f.task)) throw ConfigError({"--task: unknown task '" + f.task + "'"});
    cfg.data_task = f.task;
  }
  if (f.count) cfg.data_count = *f.count;
  if (!f.init.empty()) {
    if (f.init != "random" && f.init != "pretrained") {
      throw ConfigError({"--init: expected random or pretrained"});
    }
    cfg.init = f.init;
  }
  if (!f.mode.empty()) {
    if (!ParsePlacementMode(f.mode)) throw ConfigError({"--mode: unknown mode '" + f.mode + "'"});
    cfg.mode = f.mode;
  }
  cfg.Validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PAGE sensitivity probing and dominant-module LoRA placement on toy transformers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  GlobalFlags flags;

  auto* probe = app.add_subcommand("probe", "Compute module sensitivity and PAGE; select the dominant module");
  auto* validate = app.add_subcommand("validate", "Run the gradient, moment, and PAGE agreement checks");
  auto* train = app.add_subcommand("train", "Fine-tune under one placement plan");
  auto* sweep = app.add_subcommand("sweep", "Compare placement plans and ranks");
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic probe set (JSONL)");
  auto* init = app.add_subcommand("init-model", "Write a random or pre-trained toy checkpoint");
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare outputs byte for byte");

  for (auto* cmd : {probe, validate, train, sweep, gen, init}) AddRunFlags(cmd, flags);
  validate->add_flag("--inject-fault", flags.inject_fault,
                     "Test only: negate the analytic B gradient")
      ->group("");
  train->add_option("--mode", flags.mode,
                    "all, layer-subset, kind-subset, dominant-only, full-dominant");
  gen->add_option("--task", flags.task, "copy or mod-add");
  gen->add_option("--count", flags.count, "Number of samples");
  init->add_option("--init", flags.init, "random or pretrained");
  replay->add_option("--manifest", flags.manifest, "manifest.json to replay")
      ->required()
      ->check(CLI::ExistingFile);
  replay->add_option("--out-dir", flags.out_dir, "Directory for the replayed outputs")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (replay->parsed()) {
      const ReplayResult r = ReplayManifest(flags.manifest, flags.out_dir, &std::cerr);
      for (const auto& m : r.mismatches) std::cerr << "mismatch: " << m << '\n';
      std::cout << (r.exit_code == kExitOk ? "replay: all outputs identical\n"
                                           : "replay: outputs differ\n");
      return r.exit_code;
    }
    CommandContext ctx;
    ctx.config = BuildConfig(flags);
    ctx.config_path = flags.config;
    ctx.out_dir = flags.out_dir;
    ctx.inject_fault = flags.inject_fault;
    ctx.log = &std::cerr;
    const std::string name = app.get_subcommands().front()->get_name();
    const CommandResult result = RunCommand(name, ctx);
    for (const auto& p : result.outputs) std::cout << p.string() << '\n';
    return result.exit_code;
  } catch (const ConfigError& e) {
    for (const auto& m : e.messages()) std::cerr << "config error: " << m << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
