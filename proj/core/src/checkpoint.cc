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


#include "phd/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"
#include "phd/error.h"

namespace phd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

using json = nlohmann::json;
constexpr char kMagic[4] = {'P', 'H', 'D', 'M'};

template <typename T>
void WritePod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw IoError("truncated checkpoint: " + path.string());
  }
  return value;
}

}  // namespace

void SaveCheckpoint(const std::filesystem::path& path, const std::string& module,
                    const std::string& config_hash,
                    const std::map<std::string, std::string>& metadata,
                    const nn::ParameterRefs& params) {
  json header = {{"module", module},
                 {"config_hash", config_hash},
                 {"metadata", metadata},
                 {"tensors", json::array()}};
  std::set<std::string> seen;
  for (const ad::Parameter* p : params) {
    if (!seen.insert(p->name).second) {
      throw InvalidArgumentError("duplicate parameter name '" + p->name + "'");
    }
    header["tensors"].push_back(
        {{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  const std::string text = header.dump();
  out.write(kMagic, 4);
  WritePod(out, kCheckpointVersion);
  WritePod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const ad::Parameter* p : params) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint ReadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint not found: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("not a checkpoint file: " + path.string(), 0, 0);
  }
  const auto version = ReadPod<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw UnsupportedVersionError("checkpoint version " + std::to_string(version) +
                                  " is not supported: " + path.string());
  }
  const auto length = ReadPod<std::uint64_t>(in, path);
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
    throw IoError("truncated checkpoint header: " + path.string());
  }
  Checkpoint ckpt;
  try {
    const json header = json::parse(text);
    ckpt.module = header.at("module").get<std::string>();
    ckpt.config_hash = header.at("config_hash").get<std::string>();
    ckpt.metadata =
        header.at("metadata").get<std::map<std::string, std::string>>();
    for (const auto& t : header.at("tensors")) {
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      if (rows < 0 || cols < 0) throw ParseError("negative tensor shape", 1, 0);
      ckpt.tensors.emplace_back(t.at("name").get<std::string>(),
                                ad::Matrix(rows, cols));
    }
  } catch (const json::exception& e) {
    throw ParseError("bad checkpoint header in " + path.string() + ": " + e.what(),
                     1, 0);
  }
  for (auto& [name, m] : ckpt.tensors) {
    if (!in.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw IoError("truncated checkpoint data: " + path.string());
    }
  }
  return ckpt;
}

void RestoreParameters(const Checkpoint& checkpoint,
                       const nn::ParameterRefs& params) {
  std::map<std::string, const ad::Matrix*> by_name;
  for (const auto& [name, m] : checkpoint.tensors) by_name[name] = &m;
  if (by_name.size() != params.size()) {
    throw InvalidArgumentError("checkpoint holds " +
                               std::to_string(by_name.size()) +
                               " tensors but the model has " +
                               std::to_string(params.size()));
  }
  for (ad::Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw InvalidArgumentError("checkpoint lacks tensor '" + p->name + "'");
    }
    if (it->second->rows() != p->value.rows() ||
        it->second->cols() != p->value.cols()) {
      throw InvalidArgumentError("shape mismatch for tensor '" + p->name + "'");
    }
    p->value = *it->second;
    p->ZeroGrad();
  }
}

void CheckConfigHash(const Checkpoint& checkpoint, const std::string& expected,
                     const std::filesystem::path& path, bool allow_mismatch) {
  if (checkpoint.config_hash == expected || allow_mismatch) return;
  throw ConfigError("config_hash", "checkpoint " + path.string() +
                                       " was written with config " +
                                       checkpoint.config_hash +
                                       ", current config is " + expected);
}

}  // namespace phd
