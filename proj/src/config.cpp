#include "ibmrec/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ibmrec/matrix.hpp"

namespace ibmrec {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" +
                    std::string(value) + "'");
}

std::string format_double(double v) {
  // Round-trips exactly through from_chars.
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::string to_string(Backbone b) {
  switch (b) {
    case Backbone::kVbpr: return "vbpr";
    case Backbone::kVLightGcn: return "vlightgcn";
    case Backbone::kLattice: return "lattice";
    case Backbone::kVLattice: return "vlattice";
  }
  return "?";
}

Backbone parse_backbone(std::string_view text) {
  if (text == "vbpr") return Backbone::kVbpr;
  if (text == "vlightgcn") return Backbone::kVLightGcn;
  if (text == "lattice") return Backbone::kLattice;
  if (text == "vlattice") return Backbone::kVLattice;
  throw ConfigError("unknown backbone '" + std::string(text) + "'");
}

void RunConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "dataset") {
    dataset = std::string(value);
  } else if (key == "embedding_dim") {
    embedding_dim = parse_number<int>(key, value);
  } else if (key == "gcn_layers") {
    gcn_layers = parse_number<int>(key, value);
  } else if (key == "knn_topk") {
    knn_topk = parse_number<int>(key, value);
  } else if (key == "init_std") {
    init_std = parse_number<double>(key, value);
  } else if (key == "alpha") {
    alpha = parse_number<double>(key, value);
  } else if (key == "beta") {
    beta = parse_number<double>(key, value);
  } else if (key == "sigma_sq_fib") {
    sigma_sq_fib = parse_number<double>(key, value);
  } else if (key == "sigma_sq_gib") {
    sigma_sq_gib = parse_number<double>(key, value);
  } else if (key == "hsic_normalize") {
    hsic_normalize = parse_bool(key, value);
  } else if (key == "tau") {
    tau = parse_number<double>(key, value);
  } else if (key == "lambda_reg") {
    lambda_reg = parse_number<double>(key, value);
  } else if (key == "mask_temperature") {
    mask_temperature = parse_number<double>(key, value);
  } else if (key == "learning_rate") {
    learning_rate = parse_number<double>(key, value);
  } else if (key == "batch_size") {
    batch_size = parse_number<int>(key, value);
  } else if (key == "max_epochs") {
    max_epochs = parse_number<int>(key, value);
  } else if (key == "early_stop_patience") {
    early_stop_patience = parse_number<int>(key, value);
  } else if (key == "topn") {
    topn.clear();
    std::string_view rest = value;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      topn.push_back(parse_number<int>(key, trim(rest.substr(0, comma))));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  } else if (key == "backbone") {
    backbone = parse_backbone(value);
  } else if (key == "fib_enabled") {
    fib_enabled = parse_bool(key, value);
  } else if (key == "gib_enabled") {
    gib_enabled = parse_bool(key, value);
  } else if (key == "stage2_enabled") {
    stage2_enabled = parse_bool(key, value);
  } else if (key == "stage2_schedule") {
    if (value == "batch") {
      stage2_schedule = Stage2Schedule::kPerBatch;
    } else if (value == "epoch") {
      stage2_schedule = Stage2Schedule::kPerEpoch;
    } else {
      throw ConfigError("stage2_schedule must be batch or epoch");
    }
  } else if (key == "graph_refresh") {
    if (value == "frozen") {
      graph_refresh = GraphRefresh::kFrozen;
    } else if (value == "epoch") {
      graph_refresh = GraphRefresh::kPerEpoch;
    } else {
      throw ConfigError("graph_refresh must be frozen or epoch");
    }
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

void RunConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(embedding_dim > 0, "embedding_dim must be positive");
  require(gcn_layers >= 1, "gcn_layers must be at least 1");
  require(knn_topk >= 1, "knn_topk must be at least 1");
  require(init_std >= 0.0, "init_std must be non-negative");
  require(alpha >= 0.0 && beta >= 0.0 && lambda_reg >= 0.0, "loss coefficients must be non-negative");
  require(sigma_sq_fib > 0.0 && sigma_sq_gib > 0.0, "sigma_sq must be positive");
  require(tau > 0.0, "tau must be positive");
  require(mask_temperature > 0.0, "mask_temperature must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(batch_size >= 2, "batch_size must be at least 2");
  require(max_epochs >= 1, "max_epochs must be at least 1");
  require(early_stop_patience >= 1, "early_stop_patience must be at least 1");
  require(!topn.empty(), "topn must list at least one cutoff");
  for (int n : topn) require(n >= 1, "topn cutoffs must be positive");
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "dataset = " << dataset << '\n'
      << "embedding_dim = " << embedding_dim << '\n'
      << "gcn_layers = " << gcn_layers << '\n'
      << "knn_topk = " << knn_topk << '\n'
      << "init_std = " << format_double(init_std) << '\n'
      << "alpha = " << format_double(alpha) << '\n'
      << "beta = " << format_double(beta) << '\n'
      << "sigma_sq_fib = " << format_double(sigma_sq_fib) << '\n'
      << "sigma_sq_gib = " << format_double(sigma_sq_gib) << '\n'
      << "hsic_normalize = " << (hsic_normalize ? "true" : "false") << '\n'
      << "tau = " << format_double(tau) << '\n'
      << "lambda_reg = " << format_double(lambda_reg) << '\n'
      << "mask_temperature = " << format_double(mask_temperature) << '\n'
      << "learning_rate = " << format_double(learning_rate) << '\n'
      << "batch_size = " << batch_size << '\n'
      << "max_epochs = " << max_epochs << '\n'
      << "early_stop_patience = " << early_stop_patience << '\n'
      << "topn = ";
  for (std::size_t i = 0; i < topn.size(); ++i) out << (i ? "," : "") << topn[i];
  out << '\n'
      << "backbone = " << to_string(backbone) << '\n'
      << "fib_enabled = " << (fib_enabled ? "true" : "false") << '\n'
      << "gib_enabled = " << (gib_enabled ? "true" : "false") << '\n'
      << "stage2_enabled = " << (stage2_enabled ? "true" : "false") << '\n'
      << "stage2_schedule = " << (stage2_schedule == Stage2Schedule::kPerBatch ? "batch" : "epoch") << '\n'
      << "graph_refresh = " << (graph_refresh == GraphRefresh::kFrozen ? "frozen" : "epoch") << '\n'
      << "seed = " << seed << '\n';
  return out.str();
}

std::string RunConfig::hash() const {
  // FNV-1a over the canonical text.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

RunConfig RunConfig::from_text(std::string_view text) {
  RunConfig config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return config;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    config.set(trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  const std::string text = RunConfig{}.to_text();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) keys.push_back(line.substr(0, line.find(' ')));
  return keys;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view component) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : component) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (h | 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace ibmrec
