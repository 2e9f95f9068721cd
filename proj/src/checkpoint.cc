// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

namespace domlora {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

constexpr char kModelMagic[8] = {'D', 'L', 'M', 'O', 'D', 'E', 'L', '\0'};
constexpr char kAdapterMagic[8] = {'D', 'L', 'A', 'D', 'A', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  template <typename T>
  void Put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void Bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void Name(const std::string& s) {
    Put(static_cast<std::uint32_t>(s.size()));
    Bytes(s.data(), s.size());
  }
  void Tensor(const Matrix& m) {
    Put(static_cast<std::uint64_t>(m.rows()));
    Put(static_cast<std::uint64_t>(m.cols()));
    Bytes(m.data().data(), m.size() * sizeof(double));
  }
  void Finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open " + path.string());
  }
  template <typename T>
  T Get() {
    T v;
    Bytes(&v, sizeof(T));
    return v;
  }
  void Bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw std::runtime_error(path_.string() + ": truncated file");
  }
  std::string Name() {
    const auto n = Get<std::uint32_t>();
    if (n > 4096) throw std::runtime_error(path_.string() + ": bad name length");
    std::string s(n, '\0');
    Bytes(s.data(), n);
    return s;
  }
  Matrix Tensor() {
    const auto rows = Get<std::uint64_t>();
    const auto cols = Get<std::uint64_t>();
    if (rows > (1u << 24) || cols > (1u << 24)) {
      throw std::runtime_error(path_.string() + ": implausible tensor shape");
    }
    Matrix m(rows, cols);
    Bytes(m.data().data(), m.size() * sizeof(double));
    if (!m.AllFinite()) throw std::runtime_error(path_.string() + ": non-finite value");
    return m;
  }
  void Magic(const char (&expected)[8]) {
    char got[8];
    Bytes(got, 8);
    if (std::memcmp(got, expected, 8) != 0) {
      throw std::runtime_error(path_.string() + ": bad magic");
    }
    if (Get<std::uint32_t>() != kVersion) {
      throw std::runtime_error(path_.string() + ": unsupported version");
    }
  }
  void ExpectEnd() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw std::runtime_error(path_.string() + ": trailing bytes");
    }
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void SaveModel(const std::filesystem::path& path, const ModelParams& params) {
  Writer w(path);
  w.Bytes(kModelMagic, 8);
  w.Put(kVersion);
  const ModelConfig& c = params.config;
  for (std::size_t v : {c.n_layers, c.d_model, c.n_heads, c.d_ff, c.vocab_size,
                        c.max_seq_len}) {
    w.Put(static_cast<std::uint64_t>(v));
  }
  std::uint64_t count = 0;
  params.ForEachTensor([&](const std::string&, const Matrix&) { ++count; });
  w.Put(count);
  params.ForEachTensor([&](const std::string& name, const Matrix& m) {
    w.Name(name);
    w.Tensor(m);
  });
  w.Finish();
}

ModelParams LoadModel(const std::filesystem::path& path) {
  Reader r(path);
  r.Magic(kModelMagic);
  ModelConfig c;
  for (std::size_t* f : {&c.n_layers, &c.d_model, &c.n_heads, &c.d_ff, &c.vocab_size,
                         &c.max_seq_len}) {
    *f = static_cast<std::size_t>(r.Get<std::uint64_t>());
  }
  try {
    c.Validate();
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  ModelParams params = ModelParams::Zeros(c);
  std::map<std::string, Matrix*> slots;
  params.ForEachTensor([&](const std::string& name, Matrix& m) { slots[name] = &m; });
  const auto count = r.Get<std::uint64_t>();
  if (count != slots.size()) {
    throw std::runtime_error(path.string() + ": expected " + std::to_string(slots.size()) +
                             " tensors, found " + std::to_string(count));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.Name();
    const auto it = slots.find(name);
    if (it == slots.end() || it->second == nullptr) {
      throw std::runtime_error(path.string() + ": unexpected or duplicate tensor " + name);
    }
    Matrix m = r.Tensor();
    if (!m.SameShape(*it->second)) {
      throw std::runtime_error(path.string() + ": tensor " + name + " has wrong shape");
    }
    *it->second = std::move(m);
    it->second = nullptr;
  }
  r.ExpectEnd();
  return params;
}

void SaveAdapter(const std::filesystem::path& path, const LoraAdapter& adapter) {
  Writer w(path);
  w.Bytes(kAdapterMagic, 8);
  w.Put(kVersion);
  w.Name(ModuleName(adapter.target()));
  w.Put(adapter.alpha());
  w.Tensor(adapter.a());
  w.Tensor(adapter.b());
  w.Finish();
}

LoraAdapter LoadAdapter(const std::filesystem::path& path) {
  Reader r(path);
  r.Magic(kAdapterMagic);
  const std::string name = r.Name();
  const auto target = ParseModuleName(name);
  if (!target) throw std::runtime_error(path.string() + ": bad target " + name);
  const auto alpha = r.Get<double>();
  Matrix a = r.Tensor();
  Matrix b = r.Tensor();
  r.ExpectEnd();
  try {
    return LoraAdapter(*target, alpha, std::move(a), std::move(b));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace domlora
