// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/manifest.h"

#include <array>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

namespace domlora {

std::string Sha256File(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                               &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 init failed");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), in.gcount());
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xf];
  }
  return hex;
}

ManifestEntry DescribeOutput(const std::filesystem::path& out_dir,
                             const std::filesystem::path& file) {
  ManifestEntry e;
  e.path = std::filesystem::relative(file, out_dir).generic_string();
  e.bytes = std::filesystem::file_size(file);
  e.sha256 = Sha256File(file);
  return e;
}

void SaveManifest(const std::filesystem::path& path, const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool"] = "domlora";
  j["version"] = m.tool_version;
  j["command"] = m.command;
  j["config_path"] = m.config_path;
  j["seed"] = m.seed;
  j["inject_fault"] = m.inject_fault;
  j["config_snapshot"] = m.config_snapshot;
  auto& outs = j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& e : m.outputs) {
    outs.push_back({{"path", e.path}, {"bytes", e.bytes}, {"sha256", e.sha256}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

RunManifest LoadManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    RunManifest m;
    m.tool_version = j.at("version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.config_path = j.at("config_path").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inject_fault = j.value("inject_fault", false);
    m.config_snapshot = j.at("config_snapshot").get<std::string>();
    for (const auto& e : j.at("outputs")) {
      m.outputs.push_back({e.at("path").get<std::string>(), e.at("bytes").get<std::uint64_t>(),
                           e.at("sha256").get<std::string>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace domlora
