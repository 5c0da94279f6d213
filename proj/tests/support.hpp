// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "clsbench/rng.hpp"
#include "clsbench/tensor.hpp"

namespace testing {

template <typename T>
clsbench::nn::Tensor<T> random_param(clsbench::nn::Shape shape, std::uint64_t seed, double scale = 1.0) {
  clsbench::Rng rng(seed);
  std::vector<T> v(clsbench::nn::shape_size(shape));
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return clsbench::nn::Tensor<T>::parameter(std::move(shape), std::move(v));
}

/// Fresh scratch directory under the build tree, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("clsbench-test-" + name + "-" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testing
