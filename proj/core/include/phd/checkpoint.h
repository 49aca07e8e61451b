/*
 * Copyright 2026 The PHD Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#ifndef PHD_CHECKPOINT_H_
#define PHD_CHECKPOINT_H_

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "phd/autodiff.h"
#include "phd/nn.h"

namespace phd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// On disk: "PHDM", u32 version, u64 header length, JSON header, then every
// tensor as row-major little-endian float64 in header order.
struct Checkpoint {
  std::string module;       // e.g. "teacher", "student", "full_history"
  std::string config_hash;  // hex digest of the experiment config
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, ad::Matrix>> tensors;
};

void SaveCheckpoint(const std::filesystem::path& path, const std::string& module,
                    const std::string& config_hash,
                    const std::map<std::string, std::string>& metadata,
                    const nn::ParameterRefs& params);

// Throws IoError when the file is missing or truncated, ParseError on a bad
// header and UnsupportedVersionError on a version mismatch.
Checkpoint ReadCheckpoint(const std::filesystem::path& path);

// Copies tensors into `params` by name. Every parameter must be present with
// a matching shape.
void RestoreParameters(const Checkpoint& checkpoint,
                       const nn::ParameterRefs& params);

// Throws ConfigError naming the file unless the hashes agree or
// `allow_mismatch` is set.
void CheckConfigHash(const Checkpoint& checkpoint, const std::string& expected,
                     const std::filesystem::path& path, bool allow_mismatch);

}  // namespace phd

#endif  // PHD_CHECKPOINT_H_
