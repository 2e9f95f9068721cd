// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_COMMANDS_H_
#define DOMLORA_COMMANDS_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "domlora/config.h"
#include "domlora/lora.h"
#include "domlora/manifest.h"
#include "domlora/model.h"
#include "domlora/page.h"
#include "domlora/probe.h"

namespace domlora {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

// Independent seeds for each consumer of randomness in a run.
enum class SeedPurpose : std::uint64_t {
  kPretrainData = 1,
  kProbeData = 2,
  kTrainData = 3,
  kEvalData = 4,
  kAdapters = 5,
  kValidation = 6,
};
std::uint64_t SubSeed(std::uint64_t seed, SeedPurpose purpose);

struct CommandContext {
  RunConfig config;
  std::string config_path;  // empty when running on defaults
  std::filesystem::path out_dir;
  bool inject_fault = false;  // validate only
  std::ostream* log = nullptr;
};

struct CommandResult {
  int exit_code = kExitOk;
  std::vector<std::filesystem::path> outputs;
};

// Base model from [model] checkpoint, or built per [model] init.
ModelParams ResolveBaseModel(const RunConfig& cfg, std::ostream* log = nullptr);
std::vector<ProbeSample> ResolveProbeSet(const RunConfig& cfg);

struct ProbeOutcome {
  SensitivityMap sensitivity;
  PageMap page;
  std::optional<PageMap> page_mc;
  std::map<ModuleId, double> page_mc_stderr;
  ModuleId dominant;
  Concentration concentration;
};

ProbeOutcome RunProbe(const ModelParams& base, std::span<const ProbeSample> probe_set,
                      const RunConfig& cfg);

// Sweep plan grammar: "all", "dominant", "full-dominant", "ablation", or
// "<what>@<where>" with what in {q,k,v,o,up,gate,down,ffn-all,attn-all,
// layer-all} and where in {dom,first,mid,last,all,<layer>}. "ablation" expands
// to down/up/gate/ffn-all/attn-all at the dominant layer plus down at two
// other layers. Throws ConfigError on a malformed spec.
std::vector<PlacementPlan> BuildSweepPlans(const RunConfig& cfg, const ModelParams& base,
                                           const ModuleId& dominant);

CommandResult CmdProbe(const CommandContext& ctx);
CommandResult CmdValidate(const CommandContext& ctx);
CommandResult CmdTrain(const CommandContext& ctx);
CommandResult CmdSweep(const CommandContext& ctx);
CommandResult CmdGenData(const CommandContext& ctx);
CommandResult CmdInitModel(const CommandContext& ctx);

// Dispatches by name, then writes manifest.json covering every output.
CommandResult RunCommand(const std::string& command, const CommandContext& ctx);

struct ReplayResult {
  int exit_code = kExitOk;
  std::vector<std::string> mismatches;
};

// Re-executes the manifest's command from its config snapshot into
// `out_dir` and compares every output's SHA-256 against the manifest.
ReplayResult ReplayManifest(const std::filesystem::path& manifest_path,
                            const std::filesystem::path& out_dir, std::ostream* log);

}  // namespace domlora

#endif  // DOMLORA_COMMANDS_H_
