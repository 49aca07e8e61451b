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


#include "phd/cohort_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "phd/error.h"

namespace phd {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "cohort sidecar I/O assumes a little-endian host");

void PutU32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T Field(const json& obj, const char* name, std::int64_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) {
    throw ParseError(std::string("missing field '") + name + "'", line, 0);
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad field '") + name + "': " + e.what(),
                     line, 0);
  }
}

}  // namespace

std::filesystem::path SidecarPath(const std::filesystem::path& manifest) {
  std::filesystem::path bin = manifest;
  bin.replace_extension(".bin");
  return bin;
}

void WriteEmbeddingStore(const std::filesystem::path& path, std::uint32_t dim,
                         const std::vector<float>& values) {
  if (dim == 0 || values.size() % dim != 0) {
    throw InvalidArgumentError("embedding store size is not a multiple of dim");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kCohortMagic, 4);
  PutU32(out, kCohortFormatVersion);
  PutU32(out, dim);
  PutU32(out, static_cast<std::uint32_t>(values.size() / dim));
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<float> ReadEmbeddingStore(const std::filesystem::path& path,
                                      std::uint32_t* dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char header[16];
  in.read(header, sizeof(header));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(header))) {
    throw ParseError(path.string() + ": truncated header", 0, in.gcount());
  }
  if (std::memcmp(header, kCohortMagic, 4) != 0) {
    throw ParseError(path.string() + ": bad magic", 0, 0);
  }
  std::uint32_t version = 0, d = 0, count = 0;
  std::memcpy(&version, header + 4, 4);
  std::memcpy(&d, header + 8, 4);
  std::memcpy(&count, header + 12, 4);
  if (version != kCohortFormatVersion) {
    throw UnsupportedVersionError(path.string() + ": unsupported version " +
                                  std::to_string(version));
  }
  if (d == 0) throw ParseError(path.string() + ": zero dimension", 0, 8);
  std::vector<float> values(static_cast<std::size_t>(d) * count);
  const auto bytes = static_cast<std::streamsize>(values.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(values.data()), bytes);
  if (in.gcount() != bytes) {
    throw ParseError(path.string() + ": truncated payload, expected " +
                         std::to_string(bytes) + " bytes",
                     0, 16 + in.gcount());
  }
  *dim = d;
  return values;
}

void SaveCohort(const Cohort& cohort, const std::filesystem::path& manifest) {
  ValidateCohort(cohort);
  const std::filesystem::path sidecar = SidecarPath(manifest);
  std::vector<float> store;
  store.reserve(cohort.ExamCount() * cohort.dim);

  std::ostringstream lines;
  json header = {{"format", "phd-cohort"},
                 {"version", kCohortFormatVersion},
                 {"dim", cohort.dim},
                 {"horizons", cohort.horizons},
                 {"max_priors", cohort.max_priors},
                 {"patients", cohort.patients.size()},
                 {"embeddings", sidecar.filename().string()}};
  lines << header.dump() << '\n';

  std::uint32_t next = 0;
  for (const auto& p : cohort.patients) {
    json row;
    row["id"] = p.id;
    json years = json::array(), offsets = json::array(), avail = json::array();
    for (const auto& exam : p.exams) {
      if (exam.embedding.empty()) {
        throw InvalidArgumentError("patient '" + p.id +
                                   "' has an exam without an embedding");
      }
      years.push_back(exam.year);
      offsets.push_back(next++);
      avail.push_back(exam.available);
      store.insert(store.end(), exam.embedding.begin(), exam.embedding.end());
    }
    row["exam_years"] = years;
    row["diagnosis_year"] =
        p.diagnosis_year ? json(*p.diagnosis_year) : json(nullptr);
    row["censor_year"] = p.censor_year;
    row["labels"] = p.labels;
    row["embedding_offsets"] = offsets;
    row["available"] = avail;
    lines << row.dump() << '\n';
  }

  WriteEmbeddingStore(sidecar, static_cast<std::uint32_t>(cohort.dim), store);
  std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + manifest.string() + " for writing");
  out << lines.str();
  if (!out) throw IoError("write failed for " + manifest.string());
}

Cohort LoadCohort(const std::filesystem::path& manifest) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw IoError("cannot open " + manifest.string());

  auto parse_line = [](const std::string& text, std::int64_t line) {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line,
                       static_cast<std::int64_t>(e.byte));
    }
  };

  std::string text;
  if (!std::getline(in, text)) {
    throw ParseError(manifest.string() + ": empty manifest", 1, 0);
  }
  const json header = parse_line(text, 1);
  if (!header.is_object() || header.value("format", "") != "phd-cohort") {
    throw ParseError("not a phd-cohort manifest", 1, 0);
  }
  const auto version = Field<std::uint32_t>(header, "version", 1);
  if (version != kCohortFormatVersion) {
    throw UnsupportedVersionError("unsupported cohort version " +
                                  std::to_string(version));
  }
  Cohort cohort;
  cohort.dim = Field<int>(header, "dim", 1);
  cohort.horizons = Field<int>(header, "horizons", 1);
  cohort.max_priors = Field<int>(header, "max_priors", 1);
  const auto expected = Field<std::size_t>(header, "patients", 1);
  const auto sidecar_name = Field<std::string>(header, "embeddings", 1);

  std::uint32_t store_dim = 0;
  const std::vector<float> store =
      ReadEmbeddingStore(manifest.parent_path() / sidecar_name, &store_dim);
  if (static_cast<int>(store_dim) != cohort.dim) {
    throw ParseError("sidecar dim " + std::to_string(store_dim) +
                         " != manifest dim " + std::to_string(cohort.dim),
                     1, 0);
  }
  const std::size_t n_vectors = store.size() / store_dim;

  std::int64_t line = 1;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    const json row = parse_line(text, line);
    if (!row.is_object()) throw ParseError("expected JSON object", line, 0);
    PatientRecord p;
    p.id = Field<std::string>(row, "id", line);
    const auto years = Field<std::vector<int>>(row, "exam_years", line);
    const auto offsets =
        Field<std::vector<std::int64_t>>(row, "embedding_offsets", line);
    std::vector<bool> avail(years.size(), true);
    if (row.contains("available")) {
      avail = Field<std::vector<bool>>(row, "available", line);
    }
    if (offsets.size() != years.size() || avail.size() != years.size()) {
      throw ParseError("exam_years/embedding_offsets length mismatch", line, 0);
    }
    for (std::size_t i = 0; i < years.size(); ++i) {
      if (offsets[i] < 0 || static_cast<std::size_t>(offsets[i]) >= n_vectors) {
        throw ParseError("embedding offset " + std::to_string(offsets[i]) +
                             " outside sidecar (" + std::to_string(n_vectors) +
                             " vectors)",
                         line, 0);
      }
      ExamRecord exam;
      exam.year = years[i];
      exam.available = avail[i];
      const float* src = store.data() + offsets[i] * cohort.dim;
      exam.embedding.assign(src, src + cohort.dim);
      p.exams.push_back(std::move(exam));
    }
    if (!row.contains("diagnosis_year")) {
      throw ParseError("missing field 'diagnosis_year'", line, 0);
    }
    if (!row["diagnosis_year"].is_null()) {
      p.diagnosis_year = Field<int>(row, "diagnosis_year", line);
    }
    p.censor_year = Field<int>(row, "censor_year", line);
    p.labels = Field<LabelVector>(row, "labels", line);
    try {
      ValidatePatient(p, cohort.dim);
    } catch (const InvalidArgumentError& e) {
      throw ParseError(e.what(), line, 0);
    }
    cohort.patients.push_back(std::move(p));
  }
  if (cohort.patients.size() != expected) {
    throw ParseError("manifest declares " + std::to_string(expected) +
                         " patients but contains " +
                         std::to_string(cohort.patients.size()),
                     line, 0);
  }
  try {
    ValidateCohort(cohort);
  } catch (const InvalidArgumentError& e) {
    throw ParseError(e.what(), line, 0);
  }
  return cohort;
}

}  // namespace phd
