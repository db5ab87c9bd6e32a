#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "levemb/seqcore.hpp"
#include "levemb/tensor.hpp"

namespace testing {

inline levemb::Sequence random_dna(std::size_t len, std::mt19937_64& rng, std::size_t symbols = 4) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(symbols) - 1);
  std::vector<levemb::Code> codes(len);
  for (auto& c : codes) c = static_cast<levemb::Code>(pick(rng));
  return levemb::make_sequence(std::move(codes));
}

inline levemb::TensorD random_tensor(levemb::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  levemb::TensorD t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : t.data()) v = n(rng);
  return t;
}

// Fresh scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("levemb_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing
