// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/commands.h"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "domlora/checkpoint.h"
#include "domlora/format.h"
#include "domlora/tasks.h"
#include "domlora/trainer.h"
#include "domlora/validation.h"

namespace domlora {
namespace fs = std::filesystem;

namespace {

void Log(const CommandContext& ctx, const std::string& msg) {
  if (ctx.log != nullptr) *ctx.log << msg << '\n';
}

fs::path WriteText(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
  return path;
}

void CheckFits(const ModelConfig& config, std::span<const ProbeSample> samples,
               const char* what) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.tokens.size() > config.max_seq_len) {
      throw ConfigError({std::string(what) + " sample " + std::to_string(i) +
                         " has length " + std::to_string(s.tokens.size()) +
                         " > max_seq_len " + std::to_string(config.max_seq_len) +
                         " (samples are not truncated)"});
    }
    for (Token t : s.tokens) {
      if (t >= config.vocab_size) {
        throw ConfigError({std::string(what) + " sample " + std::to_string(i) +
                           " has token " + std::to_string(t) + " outside the vocabulary"});
      }
    }
  }
}

TaskData MakeTaskData(const RunConfig& cfg) {
  const TaskSpec spec = cfg.task_spec(cfg.train_task);
  return {GenerateSet(spec, cfg.train_samples, SubSeed(cfg.seed, SeedPurpose::kTrainData)),
          GenerateSet(spec, cfg.eval_samples, SubSeed(cfg.seed, SeedPurpose::kEvalData))};
}

std::vector<fs::path> WriteProbeReports(const fs::path& dir, const ProbeOutcome& p,
                                        const RunConfig& cfg, const ModelConfig& mc) {
  const double total = p.page.Total();
  nlohmann::ordered_json j;
  j["rank"] = p.page.rank;
  j["alpha"] = cfg.lora_alpha();
  j["scale"] = p.page.scale;
  j["num_samples"] = p.sensitivity.num_samples;
  j["restrict_kind"] =
      cfg.restrict_kind ? std::string(KindName(*cfg.restrict_kind)) : std::string("none");
  j["dominant"] = ModuleName(p.dominant);
  j["share_of_total"] = p.concentration.share_of_total;
  j["share_among_down"] = p.concentration.share_among_down;
  auto& rows = j["modules"] = nlohmann::ordered_json::array();

  std::ostringstream csv;
  csv << "layer,kind,module,d_in,sensitivity,page,share_of_total";
  if (p.page_mc) csv << ",page_mc,page_mc_stderr";
  csv << '\n';
  for (const auto& [id, value] : p.page.values) {
    const std::size_t d_in = ProjInDim(mc, id.kind);
    nlohmann::ordered_json r;
    r["module"] = ModuleName(id);
    r["layer"] = id.layer;
    r["kind"] = std::string(KindName(id.kind));
    r["d_in"] = d_in;
    r["sensitivity"] = p.sensitivity.at(id);
    r["page"] = value;
    r["share_of_total"] = total > 0 ? value / total : 0.0;
    csv << id.layer << ',' << KindName(id.kind) << ',' << ModuleName(id) << ',' << d_in
        << ',' << FormatDouble(p.sensitivity.at(id)) << ',' << FormatDouble(value) << ','
        << FormatDouble(total > 0 ? value / total : 0.0);
    if (p.page_mc) {
      r["page_mc"] = p.page_mc->at(id);
      r["page_mc_stderr"] = p.page_mc_stderr.at(id);
      csv << ',' << FormatDouble(p.page_mc->at(id)) << ','
          << FormatDouble(p.page_mc_stderr.at(id));
    }
    csv << '\n';
    rows.push_back(r);
  }

  std::ostringstream heat;
  heat << "layer";
  for (ProjKind k : kAllKinds) heat << ',' << KindName(k);
  heat << '\n';
  for (std::size_t l = 0; l < mc.n_layers; ++l) {
    heat << l;
    for (ProjKind k : kAllKinds) heat << ',' << FormatDouble(p.page.at({l, k}));
    heat << '\n';
  }
  return {WriteText(dir / "page_report.json", j.dump(2) + "\n"),
          WriteText(dir / "page.csv", csv.str()),
          WriteText(dir / "page_heatmap.csv", heat.str()),
          WriteText(dir / "dominant.txt", ModuleName(p.dominant) + "\n")};
}

struct Probed {
  ModelParams base;
  ProbeOutcome probe;
  std::vector<fs::path> outputs;
};

Probed LoadAndProbe(const CommandContext& ctx) {
  Probed out;
  out.base = ResolveBaseModel(ctx.config, ctx.log);
  const auto probe_set = ResolveProbeSet(ctx.config);
  CheckFits(out.base.config, probe_set, "probe");
  out.probe = RunProbe(out.base, probe_set, ctx.config);
  out.outputs = WriteProbeReports(ctx.out_dir, out.probe, ctx.config, out.base.config);
  Log(ctx, "dominant module: " + ModuleName(out.probe.dominant));
  return out;
}

std::size_t ResolveLayer(const std::string& where, const ModelConfig& mc,
                         const ModuleId& dominant, const std::string& spec) {
  if (where == "dom") return dominant.layer;
  if (where == "first") return 0;
  if (where == "mid") return mc.n_layers / 2;
  if (where == "last") return mc.n_layers - 1;
  std::size_t l = 0;
  std::istringstream in(where);
  if (!(in >> l) || !in.eof() || l >= mc.n_layers) {
    throw ConfigError({"[sweep] plans: bad layer '" + where + "' in '" + spec + "'"});
  }
  return l;
}

// Two layers other than the dominant one, preferring mid then last.
std::vector<std::size_t> AlternateLayers(const ModelConfig& mc, std::size_t dominant) {
  std::vector<std::size_t> order = {mc.n_layers / 2, mc.n_layers - 1};
  for (std::size_t l = mc.n_layers; l-- > 0;) order.push_back(l);
  std::vector<std::size_t> picked;
  for (std::size_t l : order) {
    if (l != dominant && std::find(picked.begin(), picked.end(), l) == picked.end()) {
      picked.push_back(l);
    }
    if (picked.size() == 2) break;
  }
  return picked;
}

}  // namespace

std::uint64_t SubSeed(std::uint64_t seed, SeedPurpose purpose) {
  return Rng(seed).Split(static_cast<std::uint64_t>(purpose)).NextU64();
}

ModelParams ResolveBaseModel(const RunConfig& cfg, std::ostream* log) {
  if (!cfg.checkpoint.empty()) {
    ModelParams p = LoadModel(cfg.checkpoint);
    if (!(p.config == cfg.model) && log != nullptr) {
      *log << "note: checkpoint dimensions override [model] settings\n";
    }
    return p;
  }
  if (cfg.init == "random") {
    Rng rng(cfg.seed);
    return ModelParams::Random(cfg.model, rng);
  }
  const auto data = GenerateSet(cfg.task_spec(cfg.pretrain_task), cfg.pretrain_samples,
                                SubSeed(cfg.seed, SeedPurpose::kPretrainData));
  if (log != nullptr) *log << "pretraining base model for " << cfg.pretrain_steps << " steps\n";
  return PretrainBase(cfg.model, data, cfg.pretrain_config(), cfg.workers);
}

std::vector<ProbeSample> ResolveProbeSet(const RunConfig& cfg) {
  if (!cfg.probe_set.empty()) {
    auto samples = LoadProbeSet(cfg.probe_set);
    if (samples.empty()) throw ConfigError({cfg.probe_set + ": probe set is empty"});
    return samples;
  }
  return GenerateSet(cfg.task_spec(cfg.probe_task), cfg.probe_samples,
                     SubSeed(cfg.seed, SeedPurpose::kProbeData));
}

ProbeOutcome RunProbe(const ModelParams& base, std::span<const ProbeSample> probe_set,
                      const RunConfig& cfg) {
  const auto grads = SampleGradients(base, probe_set, cfg.workers);
  ProbeOutcome out;
  out.sensitivity = SensitivityFromGradients(grads);
  const double s = cfg.lora_alpha() / static_cast<double>(cfg.rank);
  out.page = PageClosedFormMap(out.sensitivity, cfg.rank, s, base.config);
  out.dominant = SelectDominant(out.page, cfg.restrict_kind);
  if (out.page.Total() > 0) out.concentration = ConcentrationReport(out.page, out.dominant);
  if (cfg.monte_carlo) {
    PageMap mc = out.page;
    mc.provenance = PageProvenance::kMonteCarlo;
    mc.trials = cfg.page_trials;
    const Rng root(SubSeed(cfg.seed, SeedPurpose::kValidation));
    std::size_t index = 0;
    for (auto& [id, v] : mc.values) {
      const auto est = PageMonteCarlo(grads, id, cfg.rank, s, cfg.page_trials,
                                      root.Split(index++), cfg.workers);
      v = est.estimate;
      out.page_mc_stderr[id] = est.stderr_;
    }
    out.page_mc = std::move(mc);
  }
  return out;
}

std::vector<PlacementPlan> BuildSweepPlans(const RunConfig& cfg, const ModelParams& base,
                                           const ModuleId& dominant) {
  const ModelConfig& mc = base.config;
  const LoraSettings lora = cfg.lora();
  const std::uint64_t seed = SubSeed(cfg.seed, SeedPurpose::kAdapters);
  std::vector<std::string> specs;
  for (const auto& p : cfg.plans) {
    if (p == "ablation") {
      if (mc.n_layers < 3) {
        throw ConfigError({"[sweep] plans: ablation needs at least 3 layers"});
      }
      const auto alt = AlternateLayers(mc, dominant.layer);
      for (const std::string s : {"down@dom", "up@dom", "gate@dom", "ffn-all@dom",
                                  "attn-all@dom"}) {
        specs.push_back(s);
      }
      specs.push_back("down@" + std::to_string(alt[0]));
      specs.push_back("down@" + std::to_string(alt[1]));
    } else {
      specs.push_back(p);
    }
  }

  std::vector<PlacementPlan> plans;
  std::vector<std::string> errors;
  for (const auto& spec : specs) {
    try {
      if (spec == "all") {
        plans.push_back(MakeAllPlan(mc, lora, seed));
        continue;
      }
      if (spec == "dominant") {
        plans.push_back(MakeDominantOnlyPlan(mc, dominant, lora, seed));
        continue;
      }
      if (spec == "full-dominant") {
        plans.push_back(MakeFullWeightPlan(base, dominant));
        continue;
      }
      const auto at = spec.find('@');
      if (at == std::string::npos) {
        throw ConfigError({"[sweep] plans: unknown plan '" + spec + "'"});
      }
      const std::string what = spec.substr(0, at);
      const std::string where = spec.substr(at + 1);
      std::vector<std::size_t> layers;
      if (where != "all") layers.push_back(ResolveLayer(where, mc, dominant, spec));
      PlacementPlan plan;
      if (what == "layer-all") {
        if (layers.empty()) {
          plan = MakeAllPlan(mc, lora, seed);
        } else {
          plan = MakeLayerSubsetPlan(mc, layers, lora, seed);
        }
      } else if (what == "down" && where == "dom" && dominant.kind == ProjKind::kDown) {
        plan = MakeDominantOnlyPlan(mc, dominant, lora, seed);
      } else {
        std::vector<ProjKind> kinds;
        if (what == "ffn-all") {
          kinds = {ProjKind::kUp, ProjKind::kGate, ProjKind::kDown};
        } else if (what == "attn-all") {
          kinds = {ProjKind::kQ, ProjKind::kK, ProjKind::kV, ProjKind::kO};
        } else if (auto k = ParseKind(what)) {
          kinds = {*k};
        } else {
          throw ConfigError({"[sweep] plans: unknown module set '" + what + "' in '" +
                             spec + "'"});
        }
        plan = MakeKindSubsetPlan(mc, kinds, layers, lora, seed);
      }
      plan.label = spec + ":" + plan.label;
      plans.push_back(std::move(plan));
    } catch (const ConfigError& e) {
      errors.insert(errors.end(), e.messages().begin(), e.messages().end());
    }
  }
  for (std::size_t r : cfg.ranks) {
    const LoraSettings rl{r, 2.0 * static_cast<double>(r)};
    PlacementPlan plan = MakeDominantOnlyPlan(mc, dominant, rl, seed);
    plan.label = "rank=" + std::to_string(r) + ",alpha=" + std::to_string(2 * r) + ":" +
                 plan.label;
    plans.push_back(std::move(plan));
  }
  if (!errors.empty()) throw ConfigError(errors);
  if (plans.size() < 2) {
    throw ConfigError({"[sweep]: at least 2 plans or ranks must be listed (got " +
                       std::to_string(plans.size()) + ")"});
  }
  return plans;
}

CommandResult CmdProbe(const CommandContext& ctx) {
  Probed p = LoadAndProbe(ctx);
  return {kExitOk, p.outputs};
}

CommandResult CmdValidate(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  ValidationOptions opts;
  opts.seed = SubSeed(cfg.seed, SeedPurpose::kValidation);
  opts.seeds = cfg.validate_seeds;
  opts.moment_trials = cfg.moment_trials;
  opts.page_trials = cfg.validate_page_trials;
  opts.page_rank = cfg.rank;
  opts.page_alpha = cfg.lora_alpha();
  opts.fd_step = cfg.fd_step;
  opts.workers = cfg.workers;
  opts.fault_flip_grad_b = ctx.inject_fault;
  opts.page_model = cfg.model;
  const auto results = RunValidation(opts);
  const std::string report = FormatValidationReport(results);
  if (ctx.log != nullptr) *ctx.log << report;
  CommandResult out;
  out.outputs.push_back(WriteText(ctx.out_dir / "validation_report.txt", report));
  for (const auto& r : results) {
    if (!r.passed) {
      Log(ctx, "check failed: " + r.name);
      out.exit_code = kExitCheckFailed;
    }
  }
  return out;
}

CommandResult CmdTrain(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  CommandResult out;
  const std::uint64_t seed = SubSeed(cfg.seed, SeedPurpose::kAdapters);
  PlacementPlan plan;
  ModelParams base;
  const auto mode = ParsePlacementMode(cfg.mode).value_or(PlacementMode::kDominantOnly);
  if (mode == PlacementMode::kDominantOnly || mode == PlacementMode::kFullWeightDominant) {
    Probed p = LoadAndProbe(ctx);
    out.outputs = p.outputs;
    base = std::move(p.base);
    plan = mode == PlacementMode::kDominantOnly
               ? MakeDominantOnlyPlan(base.config, p.probe.dominant, cfg.lora(), seed)
               : MakeFullWeightPlan(base, p.probe.dominant);
  } else {
    base = ResolveBaseModel(cfg, ctx.log);
    if (mode == PlacementMode::kAll) {
      plan = MakeAllPlan(base.config, cfg.lora(), seed);
    } else if (mode == PlacementMode::kLayerSubset) {
      if (cfg.layers.empty()) throw ConfigError({"[train] layers: required for layer-subset"});
      plan = MakeLayerSubsetPlan(base.config, cfg.layers, cfg.lora(), seed);
    } else {
      if (cfg.kinds.empty()) throw ConfigError({"[train] kinds: required for kind-subset"});
      plan = MakeKindSubsetPlan(base.config, cfg.kinds, cfg.layers, cfg.lora(), seed);
    }
  }
  const TaskData data = MakeTaskData(cfg);
  CheckFits(base.config, data.train, "train");
  Log(ctx, "training " + plan.label + " (" + std::to_string(plan.TrainableParamCount()) +
               " trainable parameters)");
  const RunRecord rec = RunExperiment(base, plan, cfg.train_config(), data, cfg.workers);
  out.outputs.push_back(WriteText(ctx.out_dir / "run_record.json", RunRecordJson(rec)));
  if (cfg.checkpoint.empty()) {
    SaveModel(ctx.out_dir / "base_model.bin", base);
    out.outputs.push_back(ctx.out_dir / "base_model.bin");
  }
  if (plan.full_weight) {
    SaveModel(ctx.out_dir / "trained_model.bin", ApplyPlan(base, plan));
    out.outputs.push_back(ctx.out_dir / "trained_model.bin");
  }
  if (!plan.adapters.empty()) fs::create_directories(ctx.out_dir / "adapters");
  for (const auto& a : plan.adapters) {
    const fs::path path = ctx.out_dir / "adapters" / (ModuleName(a.target()) + ".adapter");
    SaveAdapter(path, a);
    out.outputs.push_back(path);
  }
  Log(ctx, "final train loss " + FormatDouble(rec.final_train_loss) + ", eval loss " +
               FormatDouble(rec.final_eval_loss));
  return out;
}

CommandResult CmdSweep(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  if (cfg.plans.empty() && cfg.ranks.empty()) {
    throw ConfigError({"[sweep]: plan list is empty"});
  }
  Probed p = LoadAndProbe(ctx);
  CommandResult out;
  out.outputs = p.outputs;
  std::vector<PlacementPlan> plans = BuildSweepPlans(cfg, p.base, p.probe.dominant);
  const TaskData data = MakeTaskData(cfg);
  CheckFits(p.base.config, data.train, "train");
  std::vector<RunRecord> records;
  for (auto& plan : plans) {
    Log(ctx, "run " + plan.label);
    records.push_back(RunExperiment(p.base, plan, cfg.train_config(), data, cfg.workers));
  }
  out.outputs.push_back(WriteText(ctx.out_dir / "comparison.csv", ComparisonCsv(records)));

  nlohmann::ordered_json j;
  j["dominant"] = ModuleName(p.probe.dominant);
  const auto all_it = std::find_if(records.begin(), records.end(),
                                   [](const RunRecord& r) { return r.mode == "all"; });
  const auto dom_it = std::find_if(records.begin(), records.end(), [](const RunRecord& r) {
    return r.mode == "dominant-only";
  });
  if (all_it != records.end() && dom_it != records.end()) {
    j["dominant_trainable_params"] = dom_it->trainable_param_count;
    j["all_trainable_params"] = all_it->trainable_param_count;
    j["dominant_to_all_param_ratio"] = static_cast<double>(dom_it->trainable_param_count) /
                                       static_cast<double>(all_it->trainable_param_count);
  }
  auto& arr = j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : records) arr.push_back(nlohmann::ordered_json::parse(RunRecordJson(r)));
  out.outputs.push_back(WriteText(ctx.out_dir / "sweep_records.json", j.dump(2) + "\n"));
  return out;
}

CommandResult CmdGenData(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const auto samples = GenerateSet(cfg.task_spec(cfg.data_task), cfg.data_count,
                                   SubSeed(cfg.seed, SeedPurpose::kProbeData));
  fs::create_directories(ctx.out_dir);
  const fs::path path = ctx.out_dir / "probe_set.jsonl";
  SaveProbeSet(path, samples);
  return {kExitOk, {path}};
}

CommandResult CmdInitModel(const CommandContext& ctx) {
  const ModelParams params = ResolveBaseModel(ctx.config, ctx.log);
  fs::create_directories(ctx.out_dir);
  const fs::path path = ctx.out_dir / "model.bin";
  SaveModel(path, params);
  return {kExitOk, {path}};
}

CommandResult RunCommand(const std::string& command, const CommandContext& ctx) {
  fs::create_directories(ctx.out_dir);
  CommandResult result;
  if (command == "probe") {
    result = CmdProbe(ctx);
  } else if (command == "validate") {
    result = CmdValidate(ctx);
  } else if (command == "train") {
    result = CmdTrain(ctx);
  } else if (command == "sweep") {
    result = CmdSweep(ctx);
  } else if (command == "gen-data") {
    result = CmdGenData(ctx);
  } else if (command == "init-model") {
    result = CmdInitModel(ctx);
  } else {
    throw ConfigError({"unknown command '" + command + "'"});
  }
  RunManifest m;
  m.command = command;
  m.config_path = ctx.config_path;
  m.config_snapshot = ctx.config.ToText();
  m.seed = ctx.config.seed;
  m.inject_fault = ctx.inject_fault;
  std::set<fs::path> unique(result.outputs.begin(), result.outputs.end());
  for (const auto& p : unique) m.outputs.push_back(DescribeOutput(ctx.out_dir, p));
  SaveManifest(ctx.out_dir / "manifest.json", m);
  return result;
}

ReplayResult ReplayManifest(const fs::path& manifest_path, const fs::path& out_dir,
                            std::ostream* log) {
  const RunManifest m = LoadManifest(manifest_path);
  CommandContext ctx;
  ctx.config = RunConfig::Parse(m.config_snapshot, manifest_path.string() + "#config_snapshot");
  ctx.config_path = m.config_path;
  ctx.out_dir = out_dir;
  ctx.inject_fault = m.inject_fault;
  ctx.log = log;
  RunCommand(m.command, ctx);
  ReplayResult result;
  for (const auto& e : m.outputs) {
    const fs::path p = out_dir / e.path;
    if (!fs::exists(p)) {
      result.mismatches.push_back(e.path + ": missing");
    } else if (Sha256File(p) != e.sha256) {
      result.mismatches.push_back(e.path + ": content differs");
    }
  }
  result.exit_code = result.mismatches.empty() ? kExitOk : kExitCheckFailed;
  return result;
}

}  // namespace domlora
