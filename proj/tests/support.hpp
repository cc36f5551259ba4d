#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "sift/corpus.hpp"
#include "sift/matrix.hpp"

namespace sift::test {

// Removes itself on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sift-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline FloatMatrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  FloatMatrix m(rows, cols);
  for (float& x : m.data) x = dist(gen);
  return m;
}

inline Sample make_sample(PoolIndex index, std::string source, std::string user,
                          std::string assistant) {
  return {index, std::move(source),
          {{Role::kUser, std::move(user)}, {Role::kAssistant, std::move(assistant)}}};
}

inline DataPool make_pool(std::vector<Sample> samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].pool_index = i;
  DataPool pool;
  pool.source_histogram = compute_histogram(samples);
  pool.samples = std::move(samples);
  return pool;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace sift::test
