// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_MANIFEST_H_
#define DOMLORA_MANIFEST_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace domlora {

inline constexpr const char* kToolVersion = "1.0.0";

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::uint64_t bytes = 0;
  std::string sha256;
};

// Written as manifest.json next to a command's outputs. Replaying the
// snapshot config reproduces every listed output byte for byte.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command;
  std::string config_path;
  std::string config_snapshot;
  std::uint64_t seed = 0;
  bool inject_fault = false;
  std::vector<ManifestEntry> outputs;
};

std::string Sha256File(const std::filesystem::path& path);
ManifestEntry DescribeOutput(const std::filesystem::path& out_dir,
                             const std::filesystem::path& file);

void SaveManifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest LoadManifest(const std::filesystem::path& path);

}  // namespace domlora

#endif  // DOMLORA_MANIFEST_H_
