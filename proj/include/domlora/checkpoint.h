// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_CHECKPOINT_H_
#define DOMLORA_CHECKPOINT_H_

#include <filesystem>

#include "domlora/lora.h"
#include "domlora/model.h"

namespace domlora {

// Binary layouts (all integers and floats little-endian). See
// docs/FORMATS.md.
//
// Model:   "DLMODEL\0" u32 version=1
//          u64 n_layers d_model n_heads d_ff vocab_size max_seq_len
//          u64 tensor_count
//          tensor_count x { u32 name_len, name, u64 rows, u64 cols,
//                           rows*cols f64 row-major }
// Adapter: "DLADAPT\0" u32 version=1
//          u32 name_len, target name ("L{layer}.{kind}")
//          f64 alpha, then A and B as { u64 rows, u64 cols, f64 data }
void SaveModel(const std::filesystem::path& path, const ModelParams& params);
ModelParams LoadModel(const std::filesystem::path& path);

void SaveAdapter(const std::filesystem::path& path, const LoraAdapter& adapter);
LoraAdapter LoadAdapter(const std::filesystem::path& path);

}  // namespace domlora

#endif  // DOMLORA_CHECKPOINT_H_
