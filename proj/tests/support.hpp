#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "mediqa/numcore/tensor.hpp"

namespace mediqa::test {

inline nc::Tensor random_tensor(nc::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                                bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(nc::shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return nc::Tensor(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<double> to_vector(const nc::Tensor& t) { return {t.data().begin(), t.data().end()}; }

/// Directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mediqa-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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
  std::string str(const std::string& leaf = "") const { return leaf.empty() ? path_.string() : (path_ / leaf).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace mediqa::test
