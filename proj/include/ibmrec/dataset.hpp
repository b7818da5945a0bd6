#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ibmrec/matrix.hpp"

namespace ibmrec {

// External string id <-> dense index, in first-appearance order.
class IdMap {
 public:
  Index intern(const std::string& external);
  Index at(const std::string& external) const;
  const std::string& external(Index dense) const { return external_[static_cast<std::size_t>(dense)]; }
  Index size() const { return static_cast<Index>(external_.size()); }
  bool operator==(const IdMap& other) const { return external_ == other.external_; }

 private:
  std::vector<std::string> external_;
  std::unordered_map<std::string, Index> index_;
};

struct RawInteractions {
  std::vector<std::pair<Index, Index>> pairs;  // (user, item), duplicates collapsed
  IdMap users;
  IdMap items;
};

// Each non-empty line is "user<TAB>item".
RawInteractions parse_interactions(std::istream& in, const std::string& source = "<stream>");
RawInteractions load_interactions(const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct InteractionSet {
  Index num_users = 0;
  Index num_items = 0;
  // Per-user sorted item lists.
  std::vector<std::vector<Index>> train;
  std::vector<std::vector<Index>> val;
  std::vector<std::vector<Index>> test;
  IdMap users;
  IdMap items;

  std::size_t train_size() const;
  std::size_t total_size() const;
  bool in_train(Index user, Index item) const;
  bool operator==(const InteractionSet& other) const = default;
};

// Per-user seeded split. Users with fewer than 3 interactions keep everything in train.
InteractionSet split_interactions(const RawInteractions& raw, SplitRatios ratios, std::uint64_t seed);

struct Modality {
  std::string name;
  Matrix features;  // N x d_k
};
using ModalityFeatures = std::vector<Modality>;

struct Dataset {
  InteractionSet interactions;
  ModalityFeatures modalities;
};

struct DatasetSummary {
  Index users = 0;
  Index items = 0;
  std::size_t interactions = 0;
  double density = 0.0;
  std::vector<std::pair<std::string, Index>> modality_dims;
};

DatasetSummary summarize(const Dataset& dataset);

// Directory layout: train.tsv, val.tsv, test.tsv, user_map.tsv, item_map.tsv,
// modalities.tsv (name per line), features/<name>.ibmf, summary.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

// Checks every modality has one row per item, at least one modality exists, and values are finite.
void validate_modalities(const ModalityFeatures& modalities, Index num_items);

struct TripleBatch {
  std::vector<Index> users;
  std::vector<Index> positives;
  std::vector<Index> negatives;

  std::size_t size() const { return users.size(); }
};

// Uniform (user, positive) over train interactions; negatives by rejection
// sampling over items the user has not interacted with in train.
class TripleSampler {
 public:
  explicit TripleSampler(const InteractionSet& set);

  TripleBatch sample(std::size_t batch_size, std::mt19937_64& rng) const;
  std::size_t num_interactions() const { return flat_.size(); }

 private:
  const InteractionSet* set_;
  std::vector<std::pair<Index, Index>> flat_;
};

TripleBatch sample_bpr_triples(const InteractionSet& set, std::size_t batch_size, std::mt19937_64& rng);

}  // namespace ibmrec
