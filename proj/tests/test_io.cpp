// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/io.hpp"

#include <gtest/gtest.h>

#include "cachefed/error.hpp"
#include "test_util.hpp"

namespace cachefed {
namespace {

TEST(ByteIo, LittleEndianLayout) {
  io::ByteWriter w;
  w.u32(0x01020304u);
  w.u64(0x0102030405060708ull);
  const auto& b = w.buffer();
  ASSERT_EQ(b.size(), 12u);
  EXPECT_EQ(b[0], 0x04);
  EXPECT_EQ(b[3], 0x01);
  EXPECT_EQ(b[4], 0x08);
  EXPECT_EQ(b[11], 0x01);
}

TEST(ByteIo, RoundTripScalars) {
  io::ByteWriter w;
  w.u32(7);
  w.u64(1ull << 40);
  w.f32(1.5f);
  w.f64(-2.25);
  w.bytes("abc");
  const auto buf = w.release();
  io::ByteReader r(buf);
  EXPECT_EQ(r.u32("a"), 7u);
  EXPECT_EQ(r.u64("b"), 1ull << 40);
  EXPECT_EQ(r.f32("c"), 1.5f);
  EXPECT_EQ(r.f64("d"), -2.25);
  EXPECT_EQ(r.bytes(3, "e"), "abc");
  EXPECT_EQ(r.remaining(), 0u);
}

TEST(ByteIo, TruncationNamesOffset) {
  const std::vector<std::uint8_t> buf = {1, 2, 3, 4, 5, 6};
  io::ByteReader r(buf);
  r.u32("head");
  try {
    r.u32("tail");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
    EXPECT_EQ(e.category(), Error::Category::kIo);
  }
}

TEST(FileIo, AtomicWriteThenRead) {
  const auto dir = testing::scratch_dir("io");
  const auto path = dir / "x.bin";
  io::write_file_atomic(path, std::string_view("hello"));
  io::write_file_atomic(path, std::string_view("world!"));
  const auto back = io::read_file(path);
  EXPECT_EQ(std::string(back.begin(), back.end()), "world!");
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir),
                          std::filesystem::directory_iterator()),
            1);
}

TEST(FileIo, MissingFileIsIoError) {
  EXPECT_THROW(io::read_file("/nonexistent/cachefed/file"), IoError);
}

TEST(Checksum, KnownFnvValues) {
  // FNV-1a 64 of the empty string is the offset basis.
  EXPECT_EQ(io::checksum_hex({}), "cbf29ce484222325");
  const std::string a = "a";
  EXPECT_EQ(io::checksum_hex(std::span<const std::uint8_t>(
                reinterpret_cast<const std::uint8_t*>(a.data()), a.size())),
            "af63dc4c8601ec8c");
}

}  // namespace
}  // namespace cachefed
