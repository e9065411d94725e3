#pragma once

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rewardlab/rng.hpp"

namespace rewardlab::testing {

// Runs `body` on `cases` independently seeded streams. The failing case index
// is attached to any assertion failure so it can be replayed.
inline void for_all(std::size_t cases, std::uint64_t seed,
                    const std::function<void(Rng&, std::size_t)>& body) {
  for (std::size_t c = 0; c < cases; ++c) {
    SCOPED_TRACE("property case " + std::to_string(c) + " (seed " + std::to_string(seed) + ")");
    Rng rng = make_stream(derive_seed(seed, "property", c));
    body(rng, c);
    if (::testing::Test::HasFatalFailure()) return;
  }
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * standard_normal(rng);
  return v;
}

// Random point on the probability simplex (normalized exponentials).
inline std::vector<double> random_distribution(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) total += (x = -std::log(1.0 - uniform01(rng)));
  for (auto& x : p) x /= total;
  return p;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "rewardlab_test";
    if (info != nullptr) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
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
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace rewardlab::testing
