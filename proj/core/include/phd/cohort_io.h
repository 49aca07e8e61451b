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


#ifndef PHD_COHORT_IO_H_
#define PHD_COHORT_IO_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phd/data_model.h"

namespace phd {

// On-disk cohort layout:
//   <name>.jsonl  header line {"format":"phd-cohort","version":1,...} then one
//                 JSON object per patient (id, exam_years, diagnosis_year,
//                 censor_year, labels, embedding_offsets).
//   <name>.bin    16-byte header: magic "PHDC", version u32, dim u32,
//                 count u32 (all little-endian), then count*dim float32.
// embedding_offsets index vectors in the sidecar, not bytes.
inline constexpr std::uint32_t kCohortFormatVersion = 1;
inline constexpr char kCohortMagic[4] = {'P', 'H', 'D', 'C'};

std::filesystem::path SidecarPath(const std::filesystem::path& manifest);

// Per-exam raw views are not persisted; every exam needs an embedding.
void SaveCohort(const Cohort& cohort, const std::filesystem::path& manifest);
Cohort LoadCohort(const std::filesystem::path& manifest);

// Sidecar access on its own, shared with any embedding store.
void WriteEmbeddingStore(const std::filesystem::path& path, std::uint32_t dim,
                         const std::vector<float>& values);
std::vector<float> ReadEmbeddingStore(const std::filesystem::path& path,
                                      std::uint32_t* dim);

}  // namespace phd

#endif  // PHD_COHORT_IO_H_
