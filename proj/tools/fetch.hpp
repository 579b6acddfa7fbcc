#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgn::tools {

class FetchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decompresses a gzip stream.
std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& gz);

/// Extracts regular files from a ustar archive below `dest`; returns the written paths.
/// Entries with absolute paths or ".." components are rejected.
std::vector<std::filesystem::path> untar(const std::vector<std::uint8_t>& tar,
                                         const std::filesystem::path& dest);

/// GET over http(s), following redirects. Throws FetchError when built without network support.
std::vector<std::uint8_t> http_get(const std::string& url);

/// Source location: a URL prefix or a local directory holding the same file names.
std::vector<std::uint8_t> read_source(const std::string& source, const std::string& file);

inline constexpr const char* kMnistSource = "https://ossci-datasets.s3.amazonaws.com/mnist/";
inline constexpr const char* kCifarSource = "https://www.cs.toronto.edu/~kriz/";

/// Downloads (or copies) and unpacks a dataset into <data_dir>/mnist or <data_dir>/cifar10.
/// Returns the files written.
std::vector<std::filesystem::path> fetch_dataset(const std::string& dataset,
                                                 const std::filesystem::path& data_dir,
                                                 const std::string& source);

}  // namespace lgn::tools
