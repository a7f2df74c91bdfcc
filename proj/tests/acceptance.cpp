// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fails.
// Reference values come from oracles written here, independent of the library's
// own naive path and verification harness.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "supcr/commands.hpp"
#include "supcr/loss.hpp"
#include "supcr/model.hpp"
#include "supcr/theory.hpp"
#include "supcr/training.hpp"
#include "test_util.hpp"

using namespace supcr;
using supcr::testing::random_matrix;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = true;
  std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (secs >= budget_s) {
    o.passed = false;
    o.detail += "; runtime over budget";
  }
  if (!o.passed) ++g_failures;
  std::printf("%s  [%d] %s (%.1fs / %.0fs) %s\n", o.passed ? "PASS" : "FAIL", id, title.c_str(), secs, budget_s,
              o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Triple-loop loss in extended precision with exact-equality distance grouping
// widened by the documented tolerance.
double oracle_loss(const Matrix& s, const Matrix& d) {
  const int n = static_cast<int>(s.rows());
  long double total = 0.0L;
  for (int i = 0; i < n; ++i) {
    long double row = 0.0L;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      long double den = 0.0L;
      for (int k = 0; k < n; ++k) {
        if (k == i) continue;
        const bool at_least = d(i, k) >= d(i, j) || distances_tie(d(i, k), d(i, j));
        if (at_least) den += std::exp(static_cast<long double>(s(i, k)) - s(i, j));
      }
      row += -std::log(den);
    }
    total += row / (n - 1);
  }
  return static_cast<double>(-total / n);
}

// Lower bound from sorted distance runs per anchor.
double oracle_bound(const Matrix& d, int* max_groups = nullptr) {
  const int n = static_cast<int>(d.rows());
  long double sum = 0.0L;
  int most = 0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> row;
    for (int j = 0; j < n; ++j)
      if (j != i) row.push_back(d(i, j));
    std::sort(row.begin(), row.end());
    int groups = 0;
    for (std::size_t a = 0; a < row.size();) {
      std::size_t b = a;
      while (b < row.size() && distances_tie(row[a], row[b])) ++b;
      const long double c = static_cast<long double>(b - a);
      sum += c * std::log(c);
      ++groups;
      a = b;
    }
    most = std::max(most, groups);
  }
  if (max_groups) *max_groups = most;
  return static_cast<double>(sum / (static_cast<long double>(n) * (n - 1)));
}

// Definition of delta-ordering checked triple by triple.
bool oracle_ordered(const Matrix& s, const Matrix& d, double delta) {
  const int n = static_cast<int>(s.rows());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        if (j == i || k == i || j == k) continue;
        if (distances_tie(d(i, j), d(i, k))) {
          if (!(std::abs(s(i, j) - s(i, k)) < delta)) return false;
        } else if (d(i, j) < d(i, k)) {
          if (!(s(i, j) > s(i, k) + 1.0 / delta)) return false;
        }
      }
  return true;
}

Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
  Matrix g(x.rows(), x.cols());
  Matrix p = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      p(r, c) = x(r, c) + h;
      const double up = f(p);
      p(r, c) = x(r, c) - h;
      const double down = f(p);
      p(r, c) = x(r, c);
      g(r, c) = (up - down) / (2.0 * h);
    }
  return g;
}

double rel_error(const Matrix& analytic, const Matrix& numeric) {
  return (analytic - numeric).cwiseAbs().maxCoeff() / std::max(numeric.cwiseAbs().maxCoeff(), 1e-12);
}

// Paired labels with a random number of levels, from all-distinct to all-equal.
Matrix tie_labels(Rng& rng, int rows, int dims = 1) {
  std::uniform_int_distribution<int> levels(1, std::max(1, rows / 2));
  const int lv = levels(rng);
  std::uniform_int_distribution<int> value(0, lv - 1);
  Matrix y(rows, dims);
  for (int r = 0; r < rows; r += 2)
    for (int c = 0; c < dims; ++c) y(r, c) = y(r + 1, c) = value(rng);
  return y;
}

int even_between(Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> h(lo / 2, hi / 2);
  return 2 * h(rng);
}

Matrix random_symmetric(Rng& rng, int n, double scale) {
  Matrix s = random_matrix(rng, n, n, scale);
  s = ((s + s.transpose()) * 0.5).eval();
  s.diagonal().setZero();
  return s;
}

Outcome criterion_oracle_equivalence() {
  Rng rng = derive_rng(1001, 1);
  std::uniform_int_distribution<int> dim(1, 16);
  std::uniform_real_distribution<double> tau(0.1, 4.0);
  const SimilarityKind kinds[] = {SimilarityKind::Cosine, SimilarityKind::NegL1, SimilarityKind::NegL2};
  double worst = 0.0;
  double worst_ref = 0.0;
  for (int b = 0; b < 1000; ++b) {
    const int n = even_between(rng, 4, 64);
    const PairwiseMatrices pm =
        pairwise_matrices(tie_labels(rng, n, 1 + b % 2), random_matrix(rng, n, dim(rng)), kinds[b % 3],
                          LabelDistanceKind::L1, tau(rng));
    const double fast = supcr_loss_fast(pm);
    worst = std::max(worst, std::abs(fast - supcr_loss_naive(pm)));
    if (b % 10 == 0) worst_ref = std::max(worst_ref, std::abs(fast - oracle_loss(pm.sim, pm.dist)));
  }
  return {worst < 1e-9 && worst_ref < 1e-9,
          "max|fast-naive|=" + fmt(worst) + " max|fast-ref|=" + fmt(worst_ref) + " over 1000 batches"};
}

Outcome criterion_lower_bound() {
  Rng rng = derive_rng(1002, 1);
  std::uniform_real_distribution<double> scale(0.05, 8.0);
  double min_excess = std::numeric_limits<double>::infinity();
  double min_strict = std::numeric_limits<double>::infinity();
  int strict_cases = 0;
  for (int b = 0; b < 10000; ++b) {
    const int n = even_between(rng, 2, 32);
    const Matrix dist = label_distance_matrix(tie_labels(rng, n), LabelDistanceKind::L1);
    const Matrix sim = random_symmetric(rng, n, scale(rng));
    int groups = 0;
    const double bound = oracle_bound(dist, &groups);
    const double excess = supcr_loss_fast({sim, dist, 1.0}) - bound;
    min_excess = std::min(min_excess, excess);
    if (groups >= 2) {
      ++strict_cases;
      min_strict = std::min(min_strict, excess);
    }
  }
  return {min_excess >= -1e-12 && min_strict > 0.0,
          "min excess " + fmt(min_excess) + ", min excess on " + std::to_string(strict_cases) +
              " multi-group batches " + fmt(min_strict)};
}

Outcome criterion_tightness() {
  Rng rng = derive_rng(1003, 1);
  std::uniform_real_distribution<double> tau(0.5, 3.0);
  int checked = 0;
  double worst_ratio = 0.0;
  bool ok = true;
  for (int b = 0; b < 100; ++b) {
    const int n = even_between(rng, 4, 32);
    Matrix labels = tie_labels(rng, n);
    labels *= 0.5 + b % 7;
    const Matrix dist = label_distance_matrix(labels, LabelDistanceKind::L1);
    const double bound = oracle_bound(dist);
    const double t = tau(rng);
    std::vector<double> y(labels.data(), labels.data() + n);
    for (double eps : {0.1, 0.01, 0.001}) {
      const double from_s = oracle_loss(tight_similarities(dist, eps), dist);
      const Matrix emb = tight_embeddings_1d(y, eps, t);
      const double from_v = oracle_loss(similarity_matrix(emb, SimilarityKind::NegL2, t), dist);
      for (double l : {from_s, from_v}) {
        ok = ok && l >= bound - 1e-12 && l < bound + eps;
        worst_ratio = std::max(worst_ratio, (l - bound) / eps);
        ++checked;
      }
    }
  }
  return {ok, std::to_string(checked) + " constructions, max (loss-L*)/eps = " + fmt(worst_ratio)};
}

Outcome criterion_delta_ordering() {
  Rng rng = derive_rng(1004, 1);
  const int runs = 40;
  std::ostringstream detail;
  bool ok = true;
  for (double delta : {0.3, 0.5, 0.9}) {
    int successes = 0;
    int ordered = 0;
    for (int r = 0; r < runs; ++r) {
      const int n = even_between(rng, 4, 16);
      const Matrix dist = label_distance_matrix(tie_labels(rng, n), LabelDistanceKind::L1);
      const double eps = epsilon_for_delta(distance_profile(dist), delta);
      const OptimizeResult res = optimize_similarities(dist, eps);
      const double loss = oracle_loss(res.sim, dist);
      if (!(loss < oracle_bound(dist) + eps)) continue;
      ++successes;
      if (oracle_ordered(res.sim, dist, delta)) ++ordered;
    }
    ok = ok && ordered == successes && successes * 10 >= runs * 9;
    detail << "delta " << delta << ": " << ordered << "/" << successes << " ordered, " << successes << "/" << runs
           << " reached; ";
  }
  return {ok, detail.str()};
}

Outcome criterion_gradients() {
  Rng rng = derive_rng(1005, 1);
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_real_distribution<double> tau(0.5, 3.0);
  std::ostringstream detail;
  bool ok = true;
  for (SimilarityKind kind : {SimilarityKind::Cosine, SimilarityKind::NegL1, SimilarityKind::NegL2}) {
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
      const int n = even_between(rng, 2, 16);
      const int de = dim(rng);
      const Matrix labels = tie_labels(rng, n, 1 + c % 2);
      Matrix emb = random_matrix(rng, n, de);
      if (kind == SimilarityKind::NegL1) {
        // Distinct integer offsets per row keep every coordinate difference >= 0.9.
        std::vector<int> order = supcr::testing::random_permutation(rng, n);
        for (int r = 0; r < n; ++r)
          emb.row(r) = emb.row(r) * 0.05 + RowVector::Constant(de, order[static_cast<std::size_t>(r)]);
      }
      const double t = tau(rng);
      const LossOutput out = supcr_loss_grad(labels, emb, kind, LabelDistanceKind::L1, t);
      const Matrix numeric = fd_gradient(
          [&](const Matrix& v) {
            const Matrix s = similarity_matrix(v, kind, t);
            return supcr_loss_fast({s, label_distance_matrix(labels, LabelDistanceKind::L1), t});
          },
          emb, 1e-5);
      if (numeric.cwiseAbs().maxCoeff() == 0.0 && out.grad->cwiseAbs().maxCoeff() == 0.0) continue;
      worst = std::max(worst, rel_error(*out.grad, numeric));
    }
    ok = ok && worst < 1e-4;
    detail << to_string(kind) << " " << fmt(worst) << "; ";
  }

  // End to end: SupCR through a tiny MLP, 2N = 8, d_e = 4.
  double worst_mlp = 0.0;
  for (int c = 0; c < 20; ++c) {
    MLP net = MLP::random({3, 6, 4}, rng);
    const Matrix x = random_matrix(rng, 8, 3);
    const Matrix labels = tie_labels(rng, 8);
    const auto loss_of = [&](const MLP& m) {
      return supcr_loss_grad(labels, m.forward(x), SimilarityKind::NegL2, LabelDistanceKind::L1, 2.0).value;
    };
    ForwardCache cache;
    const Matrix z = net.forward(x, &cache);
    if ((cache.pre[0].array().abs() < 1e-3).any()) continue;
    const LossOutput out = supcr_loss_grad(labels, z, SimilarityKind::NegL2, LabelDistanceKind::L1, 2.0);
    const MlpGradients g = net.backward(cache, *out.grad);
    // The output bias gradient vanishes identically, so the error is scaled by
    // the largest gradient entry over all parameters.
    double max_diff = 0.0;
    double max_numeric = 0.0;
    for (std::size_t p = 0; p < g.params.size(); ++p) {
      MLP probe = net;
      const Matrix base = *probe.parameters()[p];
      const Matrix numeric = fd_gradient(
          [&](const Matrix& value) {
            *probe.parameters()[p] = value;
            return loss_of(probe);
          },
          base, 1e-5);
      max_diff = std::max(max_diff, (g.params[p] - numeric).cwiseAbs().maxCoeff());
      max_numeric = std::max(max_numeric, numeric.cwiseAbs().maxCoeff());
    }
    worst_mlp = std::max(worst_mlp, max_diff / std::max(max_numeric, 1e-12));
  }
  ok = ok && worst_mlp < 1e-3;
  detail << "mlp " << fmt(worst_mlp);
  return {ok, detail.str()};
}

Outcome criterion_invariances() {
  Rng rng = derive_rng(1006, 1);
  std::uniform_real_distribution<double> pos(0.1, 10.0);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  double perm = 0.0;
  double trans = 0.0;
  double affine = 0.0;
  for (int b = 0; b < 300; ++b) {
    const int n = even_between(rng, 4, 32);
    const Matrix labels = tie_labels(rng, n);
    const Matrix emb = random_matrix(rng, n, 1 + b % 8);
    const SimilarityKind kind = b % 2 ? SimilarityKind::NegL1 : SimilarityKind::NegL2;
    const auto loss = [&](const Matrix& y, const Matrix& v) {
      return supcr_loss_fast(pairwise_matrices(y, v, kind, LabelDistanceKind::L1, 2.0));
    };
    const double base = loss(labels, emb);
    const auto p = supcr::testing::random_permutation(rng, n);
    perm = std::max(perm, std::abs(loss(supcr::testing::permute_rows(labels, p), supcr::testing::permute_rows(emb, p)) - base));
    const RowVector offset = random_matrix(rng, 1, emb.cols(), 5.0);
    trans = std::max(trans, std::abs(loss(labels, emb.rowwise() + offset) - base));
    const Matrix mapped = (labels * pos(rng)).array() + shift(rng);
    affine = std::max(affine, std::abs(loss(mapped, emb) - base));
  }
  return {perm <= 1e-12 && trans <= 1e-12 && affine <= 1e-12,
          "max deviation: permutation " + fmt(perm) + ", translation " + fmt(trans) + ", label affine " + fmt(affine)};
}

Outcome criterion_degenerate() {
    double worst = 0.0;
  double worst_bound = 0.0;
  for (int n = 2; n <= 64; n += 2) {
    const Matrix labels = Matrix::Constant(n, 1, 3.5);
    const Matrix emb = Matrix::Constant(n, 3, 0.25);
    const PairwiseMatrices pm = pairwise_matrices(labels, emb, SimilarityKind::NegL2, LabelDistanceKind::L1, 2.0);
    const double expected = std::log(static_cast<double>(n - 1));
    const double bound = lower_bound(distance_profile(pm.dist));
    worst = std::max(worst, std::abs(supcr_loss_fast(pm) - expected));
    worst = std::max(worst, std::abs(supcr_loss_naive(pm) - expected));
    worst_bound = std::max(worst_bound, std::abs(bound - expected));
  }
  return {worst == 0.0 && worst_bound == 0.0,
          "max |loss - ln(2N-1)| = " + fmt(worst) + ", max |L* - ln(2N-1)| = " + fmt(worst_bound) + " for 2N = 2..64"};
}

struct BenchData {
  Dataset train;
  Dataset test;
};

BenchData benchmark_data() {
  GeneratorSpec g;
  g.kind = GeneratorKind::Linear;
  g.d_in = 16;
  g.d_t = 1;
  g.noise = 0.1;
  g.size = 2500;
  const Dataset all = generate_synthetic_dataset(g, 42);
  std::vector<int> train(2000), test(500);
  std::iota(train.begin(), train.end(), 0);
  std::iota(test.begin(), test.end(), 2000);
  return {all.subset(train), all.subset(test)};
}

Outcome criterion_benchmark() {
  const BenchData data = benchmark_data();
  TrainConfig supcr;
  supcr.seed = 42;
  TrainConfig supcon = supcr;
  supcon.encoder_loss = EncoderLoss::SupCon;
  TrainConfig direct = supcr;
  direct.scheme = Scheme::Direct;

  const auto run = [&](const TrainConfig& c) {
    const TrainedModel m = train_full(data.train, c);
    return evaluate(m.encoder, m.predictor, data.test, c.dist_kind);
  };
  const Metrics a = run(supcr);
  const Metrics b = run(supcon);
  const Metrics d = run(direct);
  const double r2 = a.r2.value_or(-1.0);
  const bool ok_a = r2 >= 0.9;
  const bool ok_b = a.spearman >= 0.8 && a.spearman > b.spearman;
  const bool ok_c = a.mae <= 1.2 * d.mae;
  return {ok_a && ok_b && ok_c, "(a) R2 " + fmt(r2) + (ok_a ? "" : " FAIL") + "; (b) spearman SupCR " +
                                    fmt(a.spearman) + " vs SupCon " + fmt(b.spearman) + (ok_b ? "" : " FAIL") +
                                    "; (c) MAE SupCR " + fmt(a.mae) + " vs DIRECT " + fmt(d.mae) +
                                    (ok_c ? "" : " FAIL")};
}

Outcome criterion_determinism() {
  supcr::testing::TempDir dir("accept");
  std::ostringstream sink;
  const CommandIO io{sink, sink};
  supcr::testing::write_file(dir.file("gen.cfg"), "generator.size = 300\ngenerator.d_in = 6\n");
  if (cmd_gen_data(dir.file("gen.cfg"), dir.file("data.csv"), io) != kExitOk) return {false, "gen-data failed"};

  bool ok = true;
  std::ostringstream detail;
  for (const char* scheme : {"linear_probing", "fine_tuning", "regularization", "direct"}) {
    std::string outputs[2];
    for (int rep = 0; rep < 2; ++rep) {
      const std::string tag = std::string(scheme) + std::to_string(rep);
      supcr::testing::write_file(
          dir.file(tag + ".cfg"),
          "data.path = " + dir.file("data.csv") + "\ntrain.scheme = " + scheme +
              "\ntrain.seed = 5\ntrain.epochs_encoder = 5\ntrain.epochs_predictor = 5\ntrain.epochs_finetune = 3\n"
              "train.batch_size = 32\nmodel.hidden = 16,16\nmodel.embed_dim = 4\noutput.model = " +
              dir.file(tag + ".model") + "\noutput.metrics = " + dir.file(tag + ".json") + "\n");
      if (cmd_train(dir.file(tag + ".cfg"), io) != kExitOk) return {false, std::string("train failed: ") + scheme};
      outputs[rep] = supcr::testing::read_file(dir.file(tag + ".model")) + supcr::testing::read_file(dir.file(tag + ".json"));
    }
    const bool same = !outputs[0].empty() && outputs[0] == outputs[1];
    ok = ok && same;
    detail << scheme << (same ? " identical; " : " DIFFERS; ");
  }
  supcr::testing::write_file(dir.file("v.cfg"), "verify.bound_batches = 500\n");
  for (const char* name : {"r1.txt", "r2.txt"})
    if (cmd_verify_theory(dir.file("v.cfg"), dir.file(name), io) != kExitOk) return {false, "verify-theory failed"};
  const bool same_report = supcr::testing::read_file(dir.file("r1.txt")) == supcr::testing::read_file(dir.file("r2.txt"));
  ok = ok && same_report;
  detail << "verify-theory report " << (same_report ? "identical" : "DIFFERS");
  return {ok, detail.str()};
}

}  // namespace

int main() {
  report(1, "oracle equivalence: fast vs naive < 1e-9 on 1000 batches", 30, criterion_oracle_equivalence);
  report(2, "lower bound: loss >= L* - 1e-12 on 10000 batches, strict when >= 2 groups", 60, criterion_lower_bound);
  report(3, "tightness: tight S and 1-D embeddings within [L*, L*+eps)", 60, criterion_tightness);
  report(4, "delta-ordering: every success ordered, >= 90% reach L*+eps(delta)", 300, criterion_delta_ordering);
  report(5, "gradients: analytic vs central differences (1e-4 loss, 1e-3 through MLP)", 60, criterion_gradients);
  report(6, "invariances: permutation, translation, label affine <= 1e-12", 10, criterion_invariances);
  report(7, "degenerate: all-equal labels and embeddings give ln(2N-1) = L*", 10, criterion_degenerate);
  report(8, "synthetic benchmark: R2 >= 0.9, spearman >= 0.8 and > SupCon, MAE <= 1.2x direct", 300,
         criterion_benchmark);
  report(9, "determinism: repeated train and verify-theory give identical files", 120, criterion_determinism);
  std::printf("%s: %d failing criteria\n", g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures);
  return g_failures == 0 ? 0 : 1;
}
