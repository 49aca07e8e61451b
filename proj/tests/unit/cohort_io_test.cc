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



#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <unistd.h>

#include "phd/cohort_io.h"
#include "phd/data_model.h"
#include "phd/error.h"

namespace phd {
namespace {

namespace fs = std::filesystem;

class CohortIoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("phd_cohort_io_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static Cohort Small() {
    SynthConfig c;
    c.n_patients = 40;
    c.dim = 8;
    c.nuisance_dim = 4;
    c.seed = 3;
    return GenerateSyntheticCohort(c);
  }

  static std::string Slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
};

TEST_F(CohortIoTest, RoundTripIsExact) {
  const Cohort c = Small();
  SaveCohort(c, dir_ / "c.jsonl");
  EXPECT_TRUE(fs::exists(SidecarPath(dir_ / "c.jsonl")));
  EXPECT_EQ(LoadCohort(dir_ / "c.jsonl"), c);
}

TEST_F(CohortIoTest, SavingTwiceIsByteIdentical) {
  const Cohort c = Small();
  fs::create_directories(dir_ / "a");
  fs::create_directories(dir_ / "b");
  SaveCohort(c, dir_ / "a" / "c.jsonl");
  SaveCohort(c, dir_ / "b" / "c.jsonl");
  EXPECT_EQ(Slurp(dir_ / "a" / "c.jsonl"), Slurp(dir_ / "b" / "c.jsonl"));
  EXPECT_EQ(Slurp(dir_ / "a" / "c.bin"), Slurp(dir_ / "b" / "c.bin"));
}

TEST_F(CohortIoTest, MalformedLineReportsLineNumber) {
  SaveCohort(Small(), dir_ / "c.jsonl");
  std::string text = Slurp(dir_ / "c.jsonl");
  // Break the third line (second patient).
  std::size_t pos = 0;
  for (int i = 0; i < 2; ++i) pos = text.find('\n', pos) + 1;
  text.insert(pos, "{oops");
  std::ofstream(dir_ / "c.jsonl", std::ios::binary) << text;
  try {
    LoadCohort(dir_ / "c.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST_F(CohortIoTest, MissingFieldIsNamed) {
  SaveCohort(Small(), dir_ / "c.jsonl");
  std::string text = Slurp(dir_ / "c.jsonl");
  const auto at = text.find("\"censor_year\"");
  ASSERT_NE(at, std::string::npos);
  text.replace(at, 13, "\"censor_yeaX\"");
  std::ofstream(dir_ / "c.jsonl", std::ios::binary) << text;
  try {
    LoadCohort(dir_ / "c.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("censor_year"), std::string::npos)
        << e.what();
  }
}

TEST_F(CohortIoTest, VersionMismatchIsRejected) {
  WriteEmbeddingStore(dir_ / "s.bin", 2, {1, 2, 3, 4});
  std::string bytes = Slurp(dir_ / "s.bin");
  bytes[4] = 9;
  std::ofstream(dir_ / "s.bin", std::ios::binary) << bytes;
  std::uint32_t dim = 0;
  EXPECT_THROW(ReadEmbeddingStore(dir_ / "s.bin", &dim),
               UnsupportedVersionError);

  SaveCohort(Small(), dir_ / "c.jsonl");
  std::string text = Slurp(dir_ / "c.jsonl");
  const auto at = text.find("\"version\":1");
  ASSERT_NE(at, std::string::npos);
  text.replace(at, 11, "\"version\":7");
  std::ofstream(dir_ / "c.jsonl", std::ios::binary) << text;
  EXPECT_THROW(LoadCohort(dir_ / "c.jsonl"), UnsupportedVersionError);
}

TEST_F(CohortIoTest, TruncatedSidecarIsRejected) {
  WriteEmbeddingStore(dir_ / "s.bin", 2, {1, 2, 3, 4});
  std::uint32_t dim = 0;
  EXPECT_EQ(ReadEmbeddingStore(dir_ / "s.bin", &dim),
            (std::vector<float>{1, 2, 3, 4}));
  EXPECT_EQ(dim, 2u);
  fs::resize_file(dir_ / "s.bin", fs::file_size(dir_ / "s.bin") - 3);
  EXPECT_THROW(ReadEmbeddingStore(dir_ / "s.bin", &dim), ParseError);
  fs::resize_file(dir_ / "s.bin", 6);
  EXPECT_THROW(ReadEmbeddingStore(dir_ / "s.bin", &dim), ParseError);
}

TEST_F(CohortIoTest, MissingFileIsIoError) {
  EXPECT_THROW(LoadCohort(dir_ / "nope.jsonl"), IoError);
}

}  // namespace
}  // namespace phd
