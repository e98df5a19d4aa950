#include <gtest/gtest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"
#include "mseva/common/wav.hpp"

namespace fs = std::filesystem;
using namespace mseva;

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Error, WhatCarriesCodeAndDetail) {
  const Error e(ErrorCode::TooLong, "181000 ms");
  EXPECT_EQ(e.code(), ErrorCode::TooLong);
  EXPECT_EQ(e.detail(), "181000 ms");
  EXPECT_STREQ(e.what(), "TooLong: 181000 ms");
}

TEST(AtomicWrite, ReplacesContentsWithoutLeftovers) {
  const fs::path dir = testkit::make_temp_dir("atomic");
  const fs::path file = dir / "nested" / "doc.json";
  write_file_atomic(file, "first");
  write_file_atomic(file, "second");
  EXPECT_EQ(read_file(file), "second");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(file.parent_path())) ++entries;
  EXPECT_EQ(entries, 1);
  fs::remove_all(dir);
}

TEST(ReadFile, MissingFileIsIoFailure) {
  try {
    read_file("/nonexistent/mseva/file");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoFailure);
  }
}

TEST(Pcm16, ClampsAndRounds) {
  EXPECT_EQ(to_pcm16(0.0f), 0);
  EXPECT_EQ(to_pcm16(2.0f), 32767);
  EXPECT_EQ(to_pcm16(-2.0f), -32768);
  EXPECT_EQ(to_pcm16(0.5f), 16384);
}

TEST(Wav, RoundTripIsExactOnPcmGrid) {
  const fs::path dir = testkit::make_temp_dir("wav");
  AudioBuffer a;
  for (int i = -32768; i < 32768; i += 97) a.samples.push_back(static_cast<float>(i) / 32768.0f);
  write_wav(dir / "a.wav", a);
  const AudioBuffer b = read_wav(dir / "a.wav");
  EXPECT_EQ(b.sample_rate, kSampleRate);
  ASSERT_EQ(b.samples.size(), a.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(b.samples[i], a.samples[i]) << i;
  fs::remove_all(dir);
}

TEST(Wav, DurationMs) {
  AudioBuffer a;
  a.samples.resize(16000 * 3 + 5);
  EXPECT_EQ(a.duration_ms(), 3000);
}
