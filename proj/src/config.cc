// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/config.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "domlora/format.h"

namespace domlora {
namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Returns an error message, or empty on success.
using Setter = std::function<std::string(const std::string&)>;
using Getter = std::function<std::string()>;

struct Field {
  std::string section;
  std::string key;
  Setter set;
  Getter get;
};

std::string ParseU64(const std::string& v, std::uint64_t& out) {
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) return "expected a non-negative integer, got '" + v + "'";
  return "";
}

std::string ParseSize(const std::string& v, std::size_t& out) {
  std::uint64_t x = 0;
  auto err = ParseU64(v, x);
  if (err.empty()) out = static_cast<std::size_t>(x);
  return err;
}

std::string ParseReal(const std::string& v, double& out) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x)) {
    return "expected a finite number, got '" + v + "'";
  }
  out = x;
  return "";
}

std::string ParseBool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes") {
    out = true;
  } else if (v == "false" || v == "0" || v == "no") {
    out = false;
  } else {
    return "expected true/false, got '" + v + "'";
  }
  return "";
}

std::string ParseKindList(const std::string& v, std::vector<ProjKind>& out) {
  std::vector<ProjKind> kinds;
  for (const auto& item : SplitList(v)) {
    const auto k = ParseKind(item);
    if (!k) return "unknown projection kind '" + item + "'";
    kinds.push_back(*k);
  }
  out = kinds;
  return "";
}

std::string ParseSizeList(const std::string& v, std::vector<std::size_t>& out) {
  std::vector<std::size_t> xs;
  for (const auto& item : SplitList(v)) {
    std::size_t x = 0;
    auto err = ParseSize(item, x);
    if (!err.empty()) return err;
    xs.push_back(x);
  }
  out = xs;
  return "";
}

template <typename T>
std::string JoinList(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_same_v<T, ProjKind>) {
      s += KindName(xs[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      s += xs[i];
    } else {
      s += std::to_string(xs[i]);
    }
  }
  return s;
}

std::vector<Field> Schema(RunConfig& c) {
  std::vector<Field> f;
  auto size_field = [&f](std::string sec, std::string key, std::size_t& ref) {
    f.push_back({sec, key, [&ref](const std::string& v) { return ParseSize(v, ref); },
                 [&ref] { return std::to_string(ref); }});
  };
  auto real_field = [&f](std::string sec, std::string key, double& ref) {
    f.push_back({sec, key, [&ref](const std::string& v) { return ParseReal(v, ref); },
                 [&ref] { return FormatDouble(ref); }});
  };
  auto bool_field = [&f](std::string sec, std::string key, bool& ref) {
    f.push_back({sec, key, [&ref](const std::string& v) { return ParseBool(v, ref); },
                 [&ref] { return std::string(ref ? "true" : "false"); }});
  };
  auto string_field = [&f](std::string sec, std::string key, std::string& ref,
                           std::vector<std::string> allowed) {
    f.push_back({sec, key,
                 [&ref, allowed](const std::string& v) -> std::string {
                   if (!allowed.empty() &&
                       std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
                     return "expected one of {" + JoinList(allowed) + "}, got '" + v + "'";
                   }
                   ref = v;
                   return "";
                 },
                 [&ref] { return ref; }});
  };
  const std::vector<std::string> tasks = {"copy", "mod-add"};

  f.push_back({"run", "seed", [&c](const std::string& v) { return ParseU64(v, c.seed); },
               [&c] { return std::to_string(c.seed); }});
  size_field("run", "workers", c.workers);
  bool_field("run", "deterministic", c.deterministic);

  size_field("model", "n_layers", c.model.n_layers);
  size_field("model", "d_model", c.model.d_model);
  size_field("model", "n_heads", c.model.n_heads);
  size_field("model", "d_ff", c.model.d_ff);
  size_field("model", "vocab_size", c.model.vocab_size);
  size_field("model", "max_seq_len", c.model.max_seq_len);
  string_field("model", "checkpoint", c.checkpoint, {});
  string_field("model", "init", c.init, {"pretrained", "random"});
  string_field("model", "pretrain_task", c.pretrain_task, tasks);
  size_field("model", "pretrain_steps", c.pretrain_steps);
  size_field("model", "pretrain_batch", c.pretrain_batch);
  real_field("model", "pretrain_lr", c.pretrain_lr);
  size_field("model", "pretrain_samples", c.pretrain_samples);
  size_field("model", "copy_length", c.copy_length);

  string_field("probe", "probe_set", c.probe_set, {});
  string_field("probe", "task", c.probe_task, tasks);
  size_field("probe", "samples", c.probe_samples);

  size_field("lora", "rank", c.rank);
  f.push_back({"lora", "alpha",
               [&c](const std::string& v) -> std::string {
                 if (v == "auto") {
                   c.alpha.reset();
                   return "";
                 }
                 double x = 0;
                 auto err = ParseReal(v, x);
                 if (err.empty()) c.alpha = x;
                 return err;
               },
               [&c] { return c.alpha ? FormatDouble(*c.alpha) : std::string("auto"); }});

  f.push_back({"page", "restrict_kind",
               [&c](const std::string& v) -> std::string {
                 if (v == "none") {
                   c.restrict_kind.reset();
                   return "";
                 }
                 const auto k = ParseKind(v);
                 if (!k) return "expected a projection kind or 'none', got '" + v + "'";
                 c.restrict_kind = *k;
                 return "";
               },
               [&c] {
                 return c.restrict_kind ? std::string(KindName(*c.restrict_kind))
                                        : std::string("none");
               }});
  size_field("page", "trials", c.page_trials);
  bool_field("page", "monte_carlo", c.monte_carlo);

  string_field("train", "task", c.train_task, tasks);
  string_field("train", "mode", c.mode,
               {"all", "layer-subset", "kind-subset", "dominant-only", "full-dominant"});
  f.push_back({"train", "layers",
               [&c](const std::string& v) { return ParseSizeList(v, c.layers); },
               [&c] { return JoinList(c.layers); }});
  f.push_back({"train", "kinds",
               [&c](const std::string& v) { return ParseKindList(v, c.kinds); },
               [&c] { return JoinList(c.kinds); }});
  size_field("train", "steps", c.steps);
  size_field("train", "batch_size", c.batch_size);
  real_field("train", "peak_lr", c.peak_lr);
  real_field("train", "warmup_ratio", c.warmup_ratio);
  string_field("train", "optimizer", c.optimizer, {"adamw", "sgd"});
  size_field("train", "train_samples", c.train_samples);
  size_field("train", "eval_samples", c.eval_samples);

  f.push_back({"sweep", "plans",
               [&c](const std::string& v) -> std::string {
                 c.plans = SplitList(v);
                 return "";
               },
               [&c] { return JoinList(c.plans); }});
  f.push_back({"sweep", "ranks",
               [&c](const std::string& v) { return ParseSizeList(v, c.ranks); },
               [&c] { return JoinList(c.ranks); }});

  size_field("validate", "seeds", c.validate_seeds);
  size_field("validate", "moment_trials", c.moment_trials);
  size_field("validate", "page_trials", c.validate_page_trials);
  real_field("validate", "fd_step", c.fd_step);

  string_field("data", "task", c.data_task, tasks);
  size_field("data", "count", c.data_count);
  return f;
}

}  // namespace

namespace {
std::string JoinMessages(const std::vector<std::string>& messages) {
  std::string s;
  for (const auto& m : messages) s += m + "\n";
  if (!s.empty()) s.pop_back();
  return s;
}
}  // namespace

ConfigError::ConfigError(std::vector<std::string> messages)
    : std::runtime_error(JoinMessages(messages)), messages_(std::move(messages)) {}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = batch_size;
  t.peak_lr = peak_lr;
  t.warmup_ratio = warmup_ratio;
  t.seed = seed;
  t.optimizer.kind =
      optimizer == "sgd" ? OptimizerConfig::Kind::kSgd : OptimizerConfig::Kind::kAdamW;
  return t;
}

TrainConfig RunConfig::pretrain_config() const {
  TrainConfig t;
  t.steps = pretrain_steps;
  t.batch_size = pretrain_batch;
  t.peak_lr = pretrain_lr;
  t.warmup_ratio = warmup_ratio;
  t.seed = seed;
  return t;
}

TaskSpec RunConfig::task_spec(const std::string& task_name) const {
  TaskSpec spec;
  spec.kind = ParseTask(task_name).value_or(TaskKind::kCopy);
  spec.vocab_size = model.vocab_size;
  spec.copy_length = copy_length;
  return spec;
}

void RunConfig::Validate() const {
  std::vector<std::string> errors;
  try {
    model.Validate();
  } catch (const std::exception& e) {
    errors.push_back(std::string("[model]: ") + e.what());
  }
  if (model.vocab_size <= kFirstContent + 1) {
    errors.push_back("[model]: vocab_size must be at least 6 for the synthetic tasks");
  }
  if (2 * copy_length + 2 > model.max_seq_len) {
    errors.push_back("[model]: copy_length too long for max_seq_len");
  }
  if (model.max_seq_len < 6) errors.push_back("[model]: max_seq_len must be >= 6");
  if (rank == 0) errors.push_back("[lora]: rank must be >= 1");
  for (std::size_t r : ranks) {
    if (r == 0) errors.push_back("[sweep]: ranks must be >= 1");
  }
  for (std::size_t l : layers) {
    if (l >= model.n_layers) {
      errors.push_back("[train]: layer " + std::to_string(l) + " out of range");
    }
  }
  if (steps < 2) errors.push_back("[train]: steps must be >= 2");
  if (batch_size == 0) errors.push_back("[train]: batch_size must be >= 1");
  if (!(peak_lr > 0)) errors.push_back("[train]: peak_lr must be > 0");
  if (!(warmup_ratio > 0 && warmup_ratio < 1)) {
    errors.push_back("[train]: warmup_ratio must lie in (0, 1)");
  }
  if (train_samples == 0 || eval_samples == 0) {
    errors.push_back("[train]: train_samples and eval_samples must be >= 1");
  }
  if (probe_samples == 0) errors.push_back("[probe]: samples must be >= 1");
  if (init == "pretrained" && checkpoint.empty() &&
      (pretrain_steps < 2 || pretrain_batch == 0 || !(pretrain_lr > 0))) {
    errors.push_back("[model]: pretraining needs steps >= 2, batch >= 1, lr > 0");
  }
  if (page_trials < 2) errors.push_back("[page]: trials must be >= 2");
  if (moment_trials < 2 || validate_page_trials < 2) {
    errors.push_back("[validate]: trial counts must be >= 2");
  }
  if (!(fd_step > 0)) errors.push_back("[validate]: fd_step must be > 0");
  if (workers == 0) errors.push_back("[run]: workers must be >= 1");
  if (!errors.empty()) throw ConfigError(errors);
}

RunConfig RunConfig::Parse(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::vector<Field> schema = Schema(cfg);
  std::set<std::string> sections;
  for (const auto& f : schema) sections.insert(f.section);

  std::vector<std::string> errors;
  std::set<std::pair<std::string, std::string>> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    std::string line = raw;
    if (const auto hash = line.find_first_of("#;"); hash != std::string::npos) {
      line.erase(hash);
    }
    line = Trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back(where + "malformed section header");
        continue;
      }
      section = Trim(line.substr(1, line.size() - 2));
      if (!sections.contains(section)) {
        errors.push_back(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + "expected 'key = value'");
      continue;
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    if (section.empty()) {
      errors.push_back(where + "key '" + key + "' outside of any section");
      continue;
    }
    if (!sections.contains(section)) continue;  // already reported
    const auto it = std::find_if(schema.begin(), schema.end(), [&](const Field& f) {
      return f.section == section && f.key == key;
    });
    if (it == schema.end()) {
      errors.push_back(where + "unknown key '" + key + "' in [" + section + "]");
      continue;
    }
    if (!seen.insert({section, key}).second) {
      errors.push_back(where + "duplicate key '" + key + "' in [" + section + "]");
      continue;
    }
    if (auto err = it->set(value); !err.empty()) {
      errors.push_back(where + "[" + section + "] " + key + ": " + err);
    }
  }
  if (!errors.empty()) throw ConfigError(errors);
  try {
    cfg.Validate();
  } catch (const ConfigError& e) {
    std::vector<std::string> msgs;
    for (const auto& m : e.messages()) msgs.push_back(source + ": " + m);
    throw ConfigError(msgs);
  }
  return cfg;
}

RunConfig RunConfig::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path + ": cannot open config file"});
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str(), path);
}

std::string RunConfig::ToText() const {
  RunConfig copy = *this;
  std::vector<Field> schema = Schema(copy);
  std::string out;
  std::string section;
  for (const auto& f : schema) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

}  // namespace domlora
