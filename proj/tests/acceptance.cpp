// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "ibmrec/commands.hpp"
#include "ibmrec/graph.hpp"
#include "ibmrec/hsic.hpp"
#include "ibmrec/objectives.hpp"
#include "toy.hpp"

using namespace ibmrec;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double rbf(const Matrix& v, Index i, Index j, double sigma_sq) {
  double d = 0.0;
  for (Index c = 0; c < v.cols(); ++c) d += (v(i, c) - v(j, c)) * (v(i, c) - v(j, c));
  return std::exp(-d / (2.0 * sigma_sq));
}

// (n-1)^-2 sum_ijkl Kx_ij H_jk Ky_kl H_li on row-normalized inputs.
double brute_force_hsic(Matrix x, Matrix y, double sigma_sq) {
  const Index n = x.rows();
  for (Index r = 0; r < n; ++r) {
    x.row(r) /= std::max(x.row(r).norm(), 1e-12);
    y.row(r) /= std::max(y.row(r).norm(), 1e-12);
  }
  auto h = [n](Index a, Index b) { return (a == b ? 1.0 : 0.0) - 1.0 / static_cast<double>(n); };
  double total = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      for (Index k = 0; k < n; ++k)
        for (Index l = 0; l < n; ++l) total += rbf(x, i, j, sigma_sq) * h(j, k) * rbf(y, k, l, sigma_sq) * h(l, i);
  return total / static_cast<double>((n - 1) * (n - 1));
}

double tape_hsic(const Matrix& x, const Matrix& y, const HsicConfig& cfg) {
  Tape t;
  return hsic_estimate(t.constant(x), t.constant(y), cfg).scalar();
}

Outcome hsic_oracle() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix x = fixtures::randn(8, 3, 1000 + s), y = fixtures::randn(8, 3, 2000 + s);
    const HsicConfig cfg{0.15, true};
    worst = std::max(worst, std::abs(tape_hsic(x, y, cfg) - brute_force_hsic(x, y, cfg.sigma_sq)));
  }
  std::ostringstream d;
  d << "max abs diff " << worst;
  return {worst < 1e-10, d.str()};
}

Outcome hsic_null() {
  const HsicConfig cfg{};
  const Matrix x = fixtures::randn(16, 3, 5);
  const double constant = tape_hsic(Matrix::Constant(16, 3, 0.3), x, cfg);
  const double self = tape_hsic(x, x, cfg);
  std::mt19937_64 rng(derive_seed(0, "hsic-null-perm"));
  int below = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = static_cast<std::uint64_t>(trial);
    const Matrix a = fixtures::randn(256, 3, derive_seed(t, "hsic-null-x"));
    const Matrix b = fixtures::randn(256, 3, derive_seed(t, "hsic-null-y"));
    const double observed = hsic_value(a, b, cfg);
    std::vector<Index> perm(256);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::vector<double> null;
    Matrix shuffled(256, 3);
    for (int k = 0; k < 200; ++k) {
      std::shuffle(perm.begin(), perm.end(), rng);
      for (Index i = 0; i < 256; ++i) shuffled.row(i) = b.row(perm[static_cast<std::size_t>(i)]);
      null.push_back(hsic_value(a, shuffled, cfg));
    }
    std::sort(null.begin(), null.end());
    if (observed < null[189]) ++below;
  }
  std::ostringstream d;
  d << "constant " << constant << ", self " << self << ", below 95th percentile " << below << "/20";
  return {constant == 0.0 && self > 0.0 && below >= 18, d.str()};
}

Outcome gradient_suite() {
  const toy::Model m = toy::make();
  const GradientCheck s1 = finite_diff_check(toy::stage1_builder(m), m.tensors());
  const GradientCheck s2 = finite_diff_check(toy::stage2_builder(m), m.tensors());
  std::ostringstream d;
  d << "stage-1 max rel err " << s1.max_rel_error << ", stage-2 max rel err " << s2.max_rel_error;
  return {s1.max_rel_error < 1e-4 && s2.max_rel_error < 1e-4, d.str()};
}

Matrix brute_force_knn(const Matrix& f, int k) {
  const Index n = f.rows();
  Matrix out = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Index>> cand;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double sim = (f.row(i) / f.row(i).norm()).dot(f.row(j) / f.row(j).norm());
      if (sim != 0.0) cand.emplace_back(-sim, j);
    }
    std::sort(cand.begin(), cand.end());
    for (int r = 0; r < k && r < static_cast<int>(cand.size()); ++r) out(i, cand[r].second) = -cand[r].first;
  }
  return out;
}

// Same neighbour sets; similarities agree to rounding.
bool same_knn(const Matrix& got, const Matrix& want) {
  return (got.array() != 0.0).matrix() == (want.array() != 0.0).matrix() && (got - want).cwiseAbs().maxCoeff() < 1e-12;
}

Outcome graph_oracles() {
  // R = [[1, 1], [1, 0]]
  InteractionSet s;
  s.num_users = 2;
  s.num_items = 2;
  s.train = {{0, 1}, {0}};
  s.val.resize(2);
  s.test.resize(2);
  const Matrix n(sym_normalize(build_bipartite_adjacency(s)));
  const bool hand = std::abs(n(0, 2) - 0.5) < 1e-9 && std::abs(n(0, 3) - 0.70711) < 1e-5 &&
                    std::abs(n(1, 2) - 0.70711) < 1e-5 && std::abs(n(0, 3) - std::sqrt(0.5)) < 1e-9;
  bool knn = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    Matrix f = fixtures::randn(10, 4, seed);
    f.row(6) = f.row(1);
    for (int k : {1, 3, 5, 9}) knn = knn && same_knn(Matrix(build_modality_knn(f, k)), brute_force_knn(f, k));
  }
  return {hand && knn, std::string("hand example ") + (hand ? "ok" : "mismatch") + ", kNN " + (knn ? "exact" : "mismatch")};
}

Outcome loss_anchors() {
  Tape t;
  const Matrix s = fixtures::randn(6, 1, 3);
  const double bpr = bpr_term(t.constant(s), t.constant(s)).scalar();
  double worst = std::abs(bpr - std::log(2.0));
  for (Index b : {2, 7, 32}) {
    const Matrix u = Matrix::Ones(b, 4);
    worst = std::max(worst, std::abs(stage2_infonce(t.constant(u), t.constant(u), 0.2).scalar() -
                                     std::log(static_cast<double>(b))));
  }
  std::ostringstream d;
  d << "max deviation " << worst;
  return {worst < 1e-12, d.str()};
}

Outcome metric_oracles() {
  const std::vector<Index> ranked = {4, 7, 1}, truth = {7};
  const RankMetrics m = metrics_at(ranked, truth, 3);
  const bool hand = m.recall == 1.0 && std::abs(m.precision - 1.0 / 3.0) < 1e-15 && std::abs(m.ndcg - 0.63093) < 1e-5;
  bool exact = true;
  const ibmrec::Dataset d = fixtures::toy_dataset(5, 20, 10, 9);
  const InteractionSet& set = d.interactions;
  const Matrix users = fixtures::randn(5, 3, 10), items = fixtures::randn(20, 3, 11);
  const std::vector<int> topn = {1, 5, 10, 20};
  const MetricsResult got = evaluate_embeddings(users, items, set, Split::kTest, topn);
  for (int n : topn) {
    double recall = 0, precision = 0, ndcg = 0;
    int evaluated = 0;
    for (Index u = 0; u < 5; ++u) {
      const auto& held = set.test[static_cast<std::size_t>(u)];
      if (held.empty()) continue;
      ++evaluated;
      std::vector<std::pair<double, Index>> cand;
      for (Index i = 0; i < 20; ++i) {
        const auto& tr = set.train[static_cast<std::size_t>(u)];
        const auto& va = set.val[static_cast<std::size_t>(u)];
        if (std::count(tr.begin(), tr.end(), i) || std::count(va.begin(), va.end(), i)) continue;
        cand.emplace_back(-users.row(u).dot(items.row(i)), i);
      }
      std::sort(cand.begin(), cand.end());
      double hits = 0, dcg = 0, idcg = 0;
      for (int k = 0; k < n && k < static_cast<int>(cand.size()); ++k) {
        if (std::count(held.begin(), held.end(), cand[k].second)) {
          hits += 1;
          dcg += 1.0 / std::log2(k + 2.0);
        }
      }
      for (int k = 0; k < std::min<int>(n, static_cast<int>(held.size())); ++k) idcg += 1.0 / std::log2(k + 2.0);
      recall += hits / held.size();
      precision += hits / n;
      ndcg += dcg / idcg;
    }
    exact = exact && got.users_evaluated == evaluated && got[n].recall == recall / evaluated &&
            got[n].precision == precision / evaluated && std::abs(got[n].ndcg - ndcg / evaluated) < 1e-15;
  }
  return {hand && exact, std::string("hand case ") + (hand ? "ok" : "mismatch") + ", brute force " +
                             (exact ? "exact" : "mismatch")};
}

Outcome stage2_isolation() {
  const ibmrec::Dataset d = fixtures::toy_dataset(12, 15, 6, 4);
  RunConfig c;
  c.embedding_dim = 8;
  c.knn_topk = 3;
  c.batch_size = 32;
  Trainer t(d, c);
  const ModelParams before = t.params();
  t.stage2_step(t.sample_batch());
  const ModelParams& after = t.params();
  auto change = [](const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); };
  const double frozen = std::max({change(before.user_latent, after.user_latent),
                                  change(before.item_latent, after.item_latent),
                                  change(before.fusion_logits, after.fusion_logits),
                                  change(before.mask.hidden_weight, after.mask.hidden_weight),
                                  change(before.mask.hidden_bias, after.mask.hidden_bias),
                                  change(before.mask.out_weight, after.mask.out_weight),
                                  change(before.mask.out_bias, after.mask.out_bias)});
  const double moved = change(before.user_media, after.user_media);
  std::ostringstream s;
  s << "frozen max change " << frozen << ", C change " << moved;
  return {frozen == 0.0 && moved > 0.0, s.str()};
}

// Settings for the synthetic ablation; the kNN graph is rebuilt from the projections every epoch.
RunConfig denoising_config() {
  RunConfig c;
  apply_overrides(c, {"max_epochs=20", "early_stop_patience=5", "batch_size=512", "learning_rate=0.01", "alpha=3",
                      "sigma_sq_fib=0.15", "beta=300", "sigma_sq_gib=0.15", "graph_refresh=epoch"});
  return c;
}

Outcome directional_denoising() {
  double mean[4] = {0, 0, 0, 0};
  std::ostringstream d;
  for (std::uint64_t seed : {1, 2, 3}) {
    SynthSpec spec;
    spec.seed = seed;
    const ibmrec::Dataset data = make_synthetic(spec).dataset;
    RunConfig c = denoising_config();
    c.seed = seed;
    const auto rows = run_ablation(data, c, 1);
    for (std::size_t v = 0; v < 4; ++v) {
      for (const MetricsAtN& m : rows[v].test) {
        if (m.n == 20) mean[v] += m.value.recall / 3.0;
      }
    }
  }
  // mean: full, w/o FIB (GIB only), w/o GIB (FIB only), w/o IB
  d << "mean test recall@20 full " << mean[0] << ", GIB-only " << mean[1] << ", FIB-only " << mean[2] << ", w/o IB "
    << mean[3];
  const bool pass = mean[0] > mean[3] && mean[1] > mean[3] && mean[1] < mean[0] && mean[2] > mean[3] &&
                    mean[2] < mean[0];
  return {pass, d.str()};
}

Outcome determinism() {
  fixtures::TempDir dir("acceptance_det");
  SynthSpec spec;
  spec.users = 120;
  spec.items = 90;
  spec.seed = 7;
  const ibmrec::Dataset d = make_synthetic(spec).dataset;
  RunConfig c = denoising_config();
  apply_overrides(c, {"embedding_dim=16", "batch_size=128", "max_epochs=4"});
  train_on(d, c, dir / "a");
  train_on(d, c, dir / "b");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  int files = 0;
  bool same = slurp(dir / "a" / "metrics.json") == slurp(dir / "b" / "metrics.json");
  for (const auto& entry : std::filesystem::directory_iterator(dir / "a" / "checkpoint")) {
    ++files;
    same = same && slurp(entry.path()) == slurp(dir / "b" / "checkpoint" / entry.path().filename());
  }
  return {same && files > 0, std::to_string(files) + " checkpoint files and metrics.json " +
                                 (same ? "bit-identical" : "differ")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"HSIC oracle equivalence", hsic_oracle},
      {"HSIC nullity and positivity", hsic_null},
      {"Gradient suite", gradient_suite},
      {"Graph oracles", graph_oracles},
      {"Loss anchors", loss_anchors},
      {"Metric oracles", metric_oracles},
      {"Stage-2 parameter isolation", stage2_isolation},
      {"Directional denoising", directional_denoising},
      {"Determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  (" << o.detail << "; " << std::fixed
              << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::setprecision(6) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
