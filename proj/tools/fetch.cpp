#include "fetch.hpp"

#include <algorithm>
#include <fstream>

#include <zlib.h>

#ifdef LGN_WITH_FETCH
#include <httplib.h>
#endif

namespace lgn::tools {

namespace fs = std::filesystem;

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& gz) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FetchError("zlib init failed");
  zs.next_in = const_cast<Bytef*>(gz.data());
  zs.avail_in = static_cast<uInt>(gz.size());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int ret = Z_OK;
  while (ret != Z_STREAM_END) {
    zs.next_out = buf;
    zs.avail_out = sizeof buf;
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FetchError("gzip stream is corrupt");
    }
    out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
    if (ret == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw FetchError("gzip stream is truncated");
    }
  }
  inflateEnd(&zs);
  return out;
}

namespace {

std::uint64_t octal(const std::uint8_t* p, std::size_t n) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n && p[i] != 0 && p[i] != ' '; ++i) {
    if (p[i] < '0' || p[i] > '7') throw FetchError("tar: bad octal field");
    v = v * 8 + (p[i] - '0');
  }
  return v;
}

std::string field(const std::uint8_t* p, std::size_t n) {
  std::size_t len = 0;
  while (len < n && p[len] != 0) ++len;
  return std::string(reinterpret_cast<const char*>(p), len);
}

void write_file(const fs::path& path, const std::uint8_t* data, std::size_t n) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw FetchError("cannot write " + path.string());
}

}  // namespace

std::vector<fs::path> untar(const std::vector<std::uint8_t>& tar, const fs::path& dest) {
  std::vector<fs::path> written;
  std::size_t off = 0;
  while (off + 512 <= tar.size()) {
    const std::uint8_t* h = tar.data() + off;
    if (std::all_of(h, h + 512, [](std::uint8_t b) { return b == 0; })) break;
    std::string name = field(h, 100);
    const std::string prefix = field(h + 345, 155);
    if (!prefix.empty() && field(h + 257, 5) == "ustar") name = prefix + "/" + name;
    const std::uint64_t size = octal(h + 124, 12);
    const char type = static_cast<char>(h[156]);
    off += 512;
    if (off + size > tar.size()) throw FetchError("tar: truncated entry " + name);
    if (type == '0' || type == '\0') {
      const fs::path rel(name);
      if (rel.is_absolute()) throw FetchError("tar: absolute path " + name);
      for (const auto& part : rel) {
        if (part == "..") throw FetchError("tar: path escapes destination: " + name);
      }
      write_file(dest / rel, tar.data() + off, size);
      written.push_back(dest / rel);
    }
    off += (size + 511) / 512 * 512;
  }
  return written;
}

std::vector<std::uint8_t> http_get(const std::string& url) {
#ifdef LGN_WITH_FETCH
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw FetchError("not a URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string host = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
  httplib::Client client(host);
  client.set_follow_location(true);
  client.set_connection_timeout(30);
  client.set_read_timeout(300);
  auto res = client.Get(path);
  if (!res) throw FetchError("GET " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw FetchError("GET " + url + " returned HTTP " + std::to_string(res->status));
  return std::vector<std::uint8_t>(res->body.begin(), res->body.end());
#else
  throw FetchError("built without network support; use --source with a local directory (" + url + ")");
#endif
}

std::vector<std::uint8_t> read_source(const std::string& source, const std::string& file) {
  if (source.find("://") != std::string::npos) {
    const std::string sep = !source.empty() && source.back() == '/' ? "" : "/";
    return http_get(source + sep + file);
  }
  const fs::path p = fs::path(source) / file;
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FetchError("cannot open " + p.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<fs::path> fetch_dataset(const std::string& dataset, const fs::path& data_dir,
                                    const std::string& source) {
  std::vector<fs::path> written;
  if (dataset == "mnist") {
    const std::string src = source.empty() ? kMnistSource : source;
    for (const char* name : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                             "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"}) {
      const auto raw = gunzip(read_source(src, std::string(name) + ".gz"));
      const fs::path out = data_dir / "mnist" / name;
      write_file(out, raw.data(), raw.size());
      written.push_back(out);
    }
  } else if (dataset == "cifar10") {
    const std::string src = source.empty() ? kCifarSource : source;
    const auto tar = gunzip(read_source(src, "cifar-10-binary.tar.gz"));
    written = untar(tar, data_dir / "cifar10");
  } else {
    throw FetchError("unknown dataset: " + dataset);
  }
  return written;
}

}  // namespace lgn::tools
