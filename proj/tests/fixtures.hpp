#pragma once

#include <filesystem>
#include <algorithm>
#include <numeric>
#include <random>
#include <unistd.h>
#include <string>

#include "ibmrec/dataset.hpp"
#include "ibmrec/matrix.hpp"

namespace fixtures {

using ibmrec::Index;
using ibmrec::Matrix;

inline Matrix randn(Index r, Index c, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ibmrec_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

// Every user has `per_user` items chosen pseudo-randomly; two modalities of
// widths 5 and 3. All splits are populated for users with >= 3 items.
inline ibmrec::Dataset toy_dataset(Index users, Index items, int per_user, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ibmrec::RawInteractions raw;
  for (Index u = 0; u < users; ++u) raw.users.intern("u" + std::to_string(u));
  for (Index i = 0; i < items; ++i) raw.items.intern(std::to_string(i));
  std::vector<Index> order(static_cast<std::size_t>(items));
  for (Index u = 0; u < users; ++u) {
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (int k = 0; k < per_user; ++k) raw.pairs.emplace_back(u, order[static_cast<std::size_t>(k)]);
  }
  ibmrec::Dataset d;
  d.interactions = ibmrec::split_interactions(raw, {}, seed);
  d.modalities.push_back({"visual", randn(items, 5, seed + 1)});
  d.modalities.push_back({"textual", randn(items, 3, seed + 2)});
  return d;
}

}  // namespace fixtures
