#include <doctest.h>

#include <cstring>
#include <fstream>

#include <zlib.h>

#include "fetch.hpp"
#include "lgn/data.hpp"

using namespace lgn::tools;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> gzip(const std::vector<std::uint8_t>& raw) {
  z_stream zs{};
  REQUIRE(deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) == Z_OK);
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(raw.size())) + 32);
  zs.next_in = const_cast<Bytef*>(raw.data());
  zs.avail_in = static_cast<uInt>(raw.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  return out;
}

void tar_entry(std::vector<std::uint8_t>& tar, const std::string& name, const std::string& body,
               char type = '0') {
  std::uint8_t h[512] = {};
  std::memcpy(h, name.data(), name.size());
  std::snprintf(reinterpret_cast<char*>(h + 100), 8, "%07o", 0644);
  std::snprintf(reinterpret_cast<char*>(h + 124), 12, "%011o", static_cast<unsigned>(body.size()));
  h[156] = static_cast<std::uint8_t>(type);
  std::memcpy(h + 257, "ustar", 5);
  tar.insert(tar.end(), h, h + 512);
  tar.insert(tar.end(), body.begin(), body.end());
  tar.resize((tar.size() + 511) / 512 * 512, 0);
}

std::vector<std::uint8_t> bytes(const std::string& s) { return {s.begin(), s.end()}; }

void write(const fs::path& p, const std::vector<std::uint8_t>& data) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

void be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int s = 24; s >= 0; s -= 8) v.push_back(static_cast<std::uint8_t>(x >> s));
}

}  // namespace

TEST_CASE("gunzip inverts zlib gzip") {
  std::vector<std::uint8_t> raw(200000);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<std::uint8_t>((i * 7919) >> 5);
  CHECK(gunzip(gzip(raw)) == raw);
  CHECK(gunzip(gzip({})).empty());

  auto gz = gzip(raw);
  gz.resize(gz.size() / 2);
  CHECK_THROWS_AS(gunzip(gz), FetchError);
  CHECK_THROWS_AS(gunzip(bytes("definitely not gzip")), FetchError);
}

TEST_CASE("untar extracts regular files") {
  const fs::path dest = fs::temp_directory_path() / "lgn_test_untar";
  fs::remove_all(dest);
  std::vector<std::uint8_t> tar;
  tar_entry(tar, "top/", "", '5');
  tar_entry(tar, "top/a.bin", "hello");
  tar_entry(tar, "top/sub/b.bin", std::string(1000, 'x'));
  tar.resize(tar.size() + 1024, 0);
  const auto files = untar(tar, dest);
  REQUIRE(files.size() == 2);
  CHECK(fs::file_size(dest / "top/a.bin") == 5);
  CHECK(fs::file_size(dest / "top/sub/b.bin") == 1000);

  std::vector<std::uint8_t> evil;
  tar_entry(evil, "../escape.bin", "x");
  CHECK_THROWS_AS(untar(evil, dest), FetchError);
  std::vector<std::uint8_t> abs;
  tar_entry(abs, "/tmp/abs.bin", "x");
  CHECK_THROWS_AS(untar(abs, dest), FetchError);
  std::vector<std::uint8_t> cut;
  tar_entry(cut, "c.bin", std::string(600, 'y'));
  cut.resize(700);
  CHECK_THROWS_AS(untar(cut, dest), FetchError);
}

TEST_CASE("fetch from a local mirror lays out MNIST") {
  const fs::path src = fs::temp_directory_path() / "lgn_test_mirror";
  const fs::path dst = fs::temp_directory_path() / "lgn_test_fetched";
  fs::remove_all(src);
  fs::remove_all(dst);
  fs::create_directories(src);
  for (const char* split : {"train", "t10k"}) {
    std::vector<std::uint8_t> img, lab;
    be32(img, 0x803);
    be32(img, 2);
    be32(img, 28);
    be32(img, 28);
    img.resize(img.size() + 2 * 784, 128);
    be32(lab, 0x801);
    be32(lab, 2);
    lab.push_back(3);
    lab.push_back(9);
    write(src / (std::string(split) + "-images-idx3-ubyte.gz"), gzip(img));
    write(src / (std::string(split) + "-labels-idx1-ubyte.gz"), gzip(lab));
  }
  CHECK(fetch_dataset("mnist", dst, src.string()).size() == 4);
  const auto test = lgn::load_mnist(dst, lgn::Split::kTest);
  REQUIRE(test.size() == 2);
  CHECK(test.labels[1] == 9);

  CHECK_THROWS_AS(fetch_dataset("mnist", dst, (src / "missing").string()), FetchError);
  CHECK_THROWS_AS(fetch_dataset("svhn", dst, src.string()), FetchError);
}
