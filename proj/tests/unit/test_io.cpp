#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "deepheart/io.hpp"
#include "deepheart/manifest.hpp"
#include "support.hpp"

namespace io = deepheart::io;

TEST_SUITE("io") {
  TEST_CASE("git blob hash matches git hash-object") {
    // printf 'hello\n' | git hash-object --stdin
    CHECK(io::git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
    CHECK(io::git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  }

  TEST_CASE("crc32 reference value") {
    CHECK(io::crc32("123456789") == 0xCBF43926u);
  }

  TEST_CASE("atomic write replaces content and leaves no temp files") {
    deepheart::testing::TempDir dir("io");
    const auto path = dir / "out.txt";
    io::write_file_atomic(path, "first");
    io::write_file_atomic(path, "second");
    CHECK(io::read_file(path) == "second");
    int files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
    CHECK(files == 1);
  }

  TEST_CASE("reader reports truncation") {
    io::Writer w;
    w.put<std::uint32_t>(7);
    w.put_string("abc");
    const auto bytes = w.take();
    io::Reader r(bytes, "blob");
    CHECK(r.get<std::uint32_t>() == 7);
    CHECK(r.get_string() == "abc");
    CHECK(r.remaining() == 0);
    CHECK_THROWS_AS(r.get<std::uint8_t>(), deepheart::DataError);
  }

  TEST_CASE("manifest hash ignores timestamps and invocation details") {
    deepheart::RunManifest a, b;
    a.add("time.start", "2024-01-01T00:00:00Z");
    a.add("invocation.command_line", "deepheart train --out a");
    a.add("config.seed", "1");
    b.add("time.start", "2025-06-01T12:00:00Z");
    b.add("invocation.command_line", "deepheart train --out b");
    b.add("config.seed", "1");
    CHECK(a.content_hash() == b.content_hash());
    b.add("config.seed", "2");
    CHECK(a.content_hash() != b.content_hash());
  }

  TEST_CASE("manifest add replaces and add_block prefixes") {
    deepheart::RunManifest m;
    m.add("k", "1");
    m.add("k", "2");
    m.add_block("config.", "model.width=32\nmodel.pool=2\n");
    REQUIRE(m.entries().size() == 3);
    CHECK(m.entries()[0].second == "2");
    CHECK(m.entries()[1].first == "config.model.width");
  }

  TEST_CASE("manifest write returns the hash it stores") {
    deepheart::testing::TempDir dir("manifest");
    deepheart::RunManifest m;
    m.add("config.x", "1");
    const auto hash = m.write(dir / "run.manifest");
    CHECK(hash == m.content_hash());
    CHECK(io::read_file(dir / "run.manifest").find(hash) != std::string::npos);
  }
}
