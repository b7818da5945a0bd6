#include "ibmrec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "ibmrec/ibmf.hpp"

namespace ibmrec {

namespace fs = std::filesystem;

Index IdMap::intern(const std::string& external) {
  auto [it, inserted] = index_.try_emplace(external, static_cast<Index>(external_.size()));
  if (inserted) external_.push_back(external);
  return it->second;
}

Index IdMap::at(const std::string& external) const {
  auto it = index_.find(external);
  if (it == index_.end()) throw DataError("unknown id '" + external + "'");
  return it->second;
}

RawInteractions parse_interactions(std::istream& in, const std::string& source) {
  RawInteractions raw;
  std::set<std::pair<Index, Index>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
        line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected 'user<TAB>item'");
    }
    const Index u = raw.users.intern(line.substr(0, tab));
    const Index i = raw.items.intern(line.substr(tab + 1));
    if (seen.emplace(u, i).second) raw.pairs.emplace_back(u, i);
  }
  if (raw.pairs.empty()) throw DataError(source + ": empty dataset");
  return raw;
}

RawInteractions load_interactions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_interactions(in, path.string());
}

std::size_t InteractionSet::train_size() const {
  std::size_t n = 0;
  for (const auto& items : train) n += items.size();
  return n;
}

std::size_t InteractionSet::total_size() const {
  std::size_t n = 0;
  for (std::size_t u = 0; u < train.size(); ++u) n += train[u].size() + val[u].size() + test[u].size();
  return n;
}

bool InteractionSet::in_train(Index user, Index item) const {
  const auto& items = train[static_cast<std::size_t>(user)];
  return std::binary_search(items.begin(), items.end(), item);
}

InteractionSet split_interactions(const RawInteractions& raw, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  InteractionSet set;
  set.users = raw.users;
  set.items = raw.items;
  set.num_users = raw.users.size();
  set.num_items = raw.items.size();
  const auto m = static_cast<std::size_t>(set.num_users);
  set.train.resize(m);
  set.val.resize(m);
  set.test.resize(m);

  std::vector<std::vector<Index>> per_user(m);
  for (auto [u, i] : raw.pairs) per_user[static_cast<std::size_t>(u)].push_back(i);

  std::mt19937_64 rng(seed);
  for (std::size_t u = 0; u < m; ++u) {
    auto& items = per_user[u];
    std::sort(items.begin(), items.end());
    const auto n = static_cast<long>(items.size());
    if (n < 3) {
      set.train[u] = items;
      continue;
    }
    std::shuffle(items.begin(), items.end(), rng);
    auto share = [n](double r) { return r > 0.0 ? std::max(1L, std::lround(static_cast<double>(n) * r)) : 0L; };
    long n_test = share(ratios.test);
    long n_val = share(ratios.val);
    while (n - n_test - n_val < 1) {
      if (n_val >= n_test && n_val > 0) {
        --n_val;
      } else {
        --n_test;
      }
    }
    const long n_train = n - n_val - n_test;
    set.train[u].assign(items.begin(), items.begin() + n_train);
    set.val[u].assign(items.begin() + n_train, items.begin() + n_train + n_val);
    set.test[u].assign(items.begin() + n_train + n_val, items.end());
    std::sort(set.train[u].begin(), set.train[u].end());
    std::sort(set.val[u].begin(), set.val[u].end());
    std::sort(set.test[u].begin(), set.test[u].end());
  }
  return set;
}

void validate_modalities(const ModalityFeatures& modalities, Index num_items) {
  if (modalities.empty()) throw DataError("at least one modality is required");
  for (const Modality& m : modalities) {
    if (m.features.rows() != num_items) {
      throw DataError("modality '" + m.name + "' has " + std::to_string(m.features.rows()) +
                      " rows but the item map has " + std::to_string(num_items) + " items");
    }
    if (m.features.cols() == 0) throw DataError("modality '" + m.name + "' has zero columns");
    if (!m.features.allFinite()) throw DataError("modality '" + m.name + "' has non-finite entries");
  }
}

DatasetSummary summarize(const Dataset& dataset) {
  DatasetSummary s;
  s.users = dataset.interactions.num_users;
  s.items = dataset.interactions.num_items;
  s.interactions = dataset.interactions.total_size();
  s.density = static_cast<double>(s.interactions) / (static_cast<double>(s.users) * static_cast<double>(s.items));
  for (const Modality& m : dataset.modalities) s.modality_dims.emplace_back(m.name, m.features.cols());
  return s;
}

namespace {

void write_split(const fs::path& path, const InteractionSet& set, const std::vector<std::vector<Index>>& split) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t u = 0; u < split.size(); ++u) {
    for (Index i : split[u]) out << set.users.external(static_cast<Index>(u)) << '\t' << set.items.external(i) << '\n';
  }
}

void write_map(const fs::path& path, const IdMap& map) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (Index d = 0; d < map.size(); ++d) out << map.external(d) << '\t' << d << '\n';
}

IdMap read_map(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  IdMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 'external<TAB>dense'");
    const Index dense = std::stoll(line.substr(tab + 1));
    if (map.intern(line.substr(0, tab)) != dense) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": dense ids must be contiguous from 0");
    }
  }
  return map;
}

std::vector<std::vector<Index>> read_split(const fs::path& path, const IdMap& users, const IdMap& items) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<Index>> split(static_cast<std::size_t>(users.size()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 'user<TAB>item'");
    split[static_cast<std::size_t>(users.at(line.substr(0, tab)))].push_back(items.at(line.substr(tab + 1)));
  }
  for (auto& s : split) std::sort(s.begin(), s.end());
  return split;
}

}  // namespace

void save_dataset(const fs::path& dir, const Dataset& dataset) {
  const InteractionSet& set = dataset.interactions;
  validate_modalities(dataset.modalities, set.num_items);
  fs::create_directories(dir / "features");
  write_split(dir / "train.tsv", set, set.train);
  write_split(dir / "val.tsv", set, set.val);
  write_split(dir / "test.tsv", set, set.test);
  write_map(dir / "user_map.tsv", set.users);
  write_map(dir / "item_map.tsv", set.items);
  {
    std::ofstream out(dir / "modalities.tsv", std::ios::trunc);
    for (const Modality& m : dataset.modalities) out << m.name << '\n';
  }
  for (const Modality& m : dataset.modalities) ibmf::write_matrix(dir / "features" / (m.name + ".ibmf"), m.features);

  const DatasetSummary s = summarize(dataset);
  std::ofstream out(dir / "summary.json", std::ios::trunc);
  out << "{\"users\": " << s.users << ", \"items\": " << s.items << ", \"interactions\": " << s.interactions
      << ", \"density\": " << std::setprecision(6) << s.density << ", \"modalities\": {";
  for (std::size_t k = 0; k < s.modality_dims.size(); ++k) {
    out << (k ? ", " : "") << '"' << s.modality_dims[k].first << "\": " << s.modality_dims[k].second;
  }
  out << "}}\n";
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
  Dataset d;
  InteractionSet& set = d.interactions;
  set.users = read_map(dir / "user_map.tsv");
  set.items = read_map(dir / "item_map.tsv");
  set.num_users = set.users.size();
  set.num_items = set.items.size();
  set.train = read_split(dir / "train.tsv", set.users, set.items);
  set.val = read_split(dir / "val.tsv", set.users, set.items);
  set.test = read_split(dir / "test.tsv", set.users, set.items);

  std::ifstream names(dir / "modalities.tsv");
  if (!names) throw DataError("cannot open " + (dir / "modalities.tsv").string());
  std::string name;
  while (std::getline(names, name)) {
    if (name.empty()) continue;
    d.modalities.push_back({name, ibmf::read_matrix(dir / "features" / (name + ".ibmf"))});
  }
  validate_modalities(d.modalities, set.num_items);
  return d;
}

TripleSampler::TripleSampler(const InteractionSet& set) : set_(&set) {
  for (std::size_t u = 0; u < set.train.size(); ++u) {
    for (Index i : set.train[u]) flat_.emplace_back(static_cast<Index>(u), i);
  }
}

TripleBatch TripleSampler::sample(std::size_t batch_size, std::mt19937_64& rng) const {
  TripleBatch batch;
  if (flat_.empty()) throw DataError("no train interactions to sample from");
  batch.users.reserve(batch_size);
  batch.positives.reserve(batch_size);
  batch.negatives.reserve(batch_size);
  std::uniform_int_distribution<std::size_t> pick(0, flat_.size() - 1);
  std::uniform_int_distribution<Index> item(0, set_->num_items - 1);
  constexpr int kUserRetries = 16;
  for (std::size_t b = 0; b < batch_size; ++b) {
    for (int attempt = 0; attempt < kUserRetries; ++attempt) {
      const auto [u, i] = flat_[pick(rng)];
      if (set_->train[static_cast<std::size_t>(u)].size() >= static_cast<std::size_t>(set_->num_items)) {
        continue;  // no negative exists for this user
      }
      Index j = item(rng);
      while (set_->in_train(u, j)) j = item(rng);
      batch.users.push_back(u);
      batch.positives.push_back(i);
      batch.negatives.push_back(j);
      break;
    }
  }
  return batch;
}

TripleBatch sample_bpr_triples(const InteractionSet& set, std::size_t batch_size, std::mt19937_64& rng) {
  return TripleSampler(set).sample(batch_size, rng);
}

}  // namespace ibmrec
