#include "supcr/verify.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <sstream>

#include "supcr/batch.hpp"
#include "supcr/loss.hpp"
#include "supcr/model.hpp"
#include "supcr/pairwise.hpp"
#include "supcr/theory.hpp"

namespace supcr {

namespace {

std::string num(double v) { return format_double(v); }

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

int random_even(Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> pick(lo / 2, hi / 2);
  return 2 * pick(rng);
}

// Integer labels from a random number of levels, so ties range from none
// (besides view partners) to all-equal. View partners share a label.
Matrix random_scalar_labels(Rng& rng, int rows) {
  std::uniform_int_distribution<int> levels_pick(1, rows);
  std::uniform_int_distribution<int> value(0, levels_pick(rng) - 1);
  Matrix y(rows, 1);
  for (int r = 0; r + 1 < rows; r += 2) y(r, 0) = y(r + 1, 0) = value(rng);
  return y;
}

Matrix random_symmetric(Rng& rng, int n, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix s = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) s(i, j) = s(j, i) = normal(rng);
  return s;
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

bool has_two_groups(const DistanceProfile& profile) {
  return std::any_of(profile.anchors.begin(), profile.anchors.end(),
                     [](const auto& a) { return a.distances.size() >= 2; });
}

void fill_theory_fields(SuiteCase& c, const DistanceProfile& profile, double epsilon, double loss) {
  c.lower_bound = lower_bound(profile);
  c.epsilon = epsilon;
  c.gamma = gamma_for_epsilon(profile, epsilon);
  c.achieved_loss = loss;
  if (!c.delta) c.delta = certified_delta(profile, std::max(loss - c.lower_bound, 0.0));
}

}  // namespace

bool VerifyReport::all_passed() const { return first_failure() == nullptr; }

const SuiteCase* VerifyReport::first_failure() const {
  for (const auto& c : cases)
    if (!c.passed) return &c;
  return nullptr;
}

std::string VerifyReport::to_text() const {
  std::ostringstream out;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const SuiteCase& c = cases[k];
    if (k) out << '\n';
    out << "case: " << c.name << '\n';
    out << "status: " << (c.passed ? "pass" : "FAIL") << '\n';
    out << "lower_bound: " << num(c.lower_bound) << '\n';
    out << "epsilon: " << num(c.epsilon) << '\n';
    out << "gamma: " << num(c.gamma) << '\n';
    out << "delta: " << (c.delta ? num(*c.delta) : "none") << '\n';
    out << "achieved_loss: " << num(c.achieved_loss) << '\n';
    out << "is_delta_ordered: " << (c.is_delta_ordered ? (*c.is_delta_ordered ? "true" : "false") : "unset") << '\n';
    for (const auto& [key, value] : c.extra) out << key << ": " << value << '\n';
    if (!c.detail.empty()) out << "detail: " << c.detail << '\n';
  }
  return out.str();
}

VerifyReport run_theory_suite(const TheorySuiteOptions& o) {
  VerifyReport report;
  const auto loss_under_test = [&](const Matrix& sim, const Matrix& dist) {
    const PairwiseMatrices pm{sim, dist, 1.0};
    return o.fault_strict_mask ? supcr_loss_naive(pm, DenominatorMask::StrictPlusSelf) : supcr_loss_fast(pm);
  };

  {  // Lower bound and its strictness on random continuous S.
    SuiteCase c;
    c.name = "lower_bound";
    Rng rng = derive_rng(o.seed, 101);
    std::uniform_real_distribution<double> scale(0.1, 5.0);
    double min_excess = std::numeric_limits<double>::infinity();
    int strict_checked = 0;
    for (int b = 0; b < o.bound_batches; ++b) {
      const int n = random_even(rng, 4, o.max_batch);
      const Matrix dist = label_distance_matrix(random_scalar_labels(rng, n), LabelDistanceKind::L1);
      const Matrix sim = random_symmetric(rng, n, scale(rng));
      const DistanceProfile profile = distance_profile(dist);
      const double bound = lower_bound(profile);
      const double loss = loss_under_test(sim, dist);
      const double excess = loss - bound;
      if (excess < min_excess) {
        min_excess = excess;
        fill_theory_fields(c, profile, epsilon_for_delta(profile, 0.5), loss);
      }
      if (c.passed && !(loss >= bound - 1e-12)) {
        c.passed = false;
        c.detail = "lower bound violated at batch " + std::to_string(b) + ": loss " + num(loss) + " < L* " + num(bound);
      }
      if (has_two_groups(profile)) {
        ++strict_checked;
        if (c.passed && !(excess > 0.0)) {
          c.passed = false;
          c.detail = "excess not strictly positive at batch " + std::to_string(b);
        }
      }
    }
    c.extra = {{"batches", std::to_string(o.bound_batches)},
               {"strict_checked", std::to_string(strict_checked)},
               {"min_excess", num(min_excess)}};
    report.cases.push_back(std::move(c));
  }

  {  // Fast sweep against the triple loop.
    SuiteCase c;
    c.name = "oracle_equivalence";
    Rng rng = derive_rng(o.seed, 102);
    double worst = 0.0;
    for (int b = 0; b < o.equivalence_batches; ++b) {
      const int n = random_even(rng, 4, std::max(4, o.max_batch));
      const Matrix labels = random_scalar_labels(rng, n);
      const Matrix emb = random_matrix(rng, n, 1 + static_cast<int>(rng() % 8));
      const PairwiseMatrices pm = pairwise_matrices(labels, emb, SimilarityKind::NegL2, LabelDistanceKind::L1, 2.0);
      const double fast = supcr_loss_fast(pm);
      const double naive = supcr_loss_naive(pm);
      if (std::abs(fast - naive) >= worst) {
        worst = std::abs(fast - naive);
        fill_theory_fields(c, distance_profile(pm.dist), 0.01, fast);
      }
    }
    if (!(worst < 1e-9)) {
      c.passed = false;
      c.detail = "fast and naive loss differ by " + num(worst);
    }
    c.extra = {{"batches", std::to_string(o.equivalence_batches)}, {"max_abs_diff", num(worst)}};
    report.cases.push_back(std::move(c));
  }

  for (const double eps : o.epsilons) {  // Tightness: both constructions land in [L*, L* + eps).
    SuiteCase c;
    c.name = "tightness_eps_" + short_num(eps);
    Rng rng = derive_rng(o.seed, 103 + static_cast<std::uint64_t>(1e6 * eps));
    double worst_ratio = -1.0;
    for (int b = 0; b < o.tight_batches && c.passed; ++b) {
      const int n = random_even(rng, 4, o.max_batch);
      const Matrix labels = random_scalar_labels(rng, n);
      const Matrix dist = label_distance_matrix(labels, LabelDistanceKind::L1);
      const DistanceProfile profile = distance_profile(dist);
      const double bound = lower_bound(profile);
      const double tau = 2.0;
      const std::vector<double> y(labels.data(), labels.data() + labels.size());
      const Matrix emb = tight_embeddings_1d(y, eps, tau);
      const double from_sim = loss_under_test(tight_similarities(dist, eps), dist);
      const double from_emb = loss_under_test(similarity_matrix(emb, SimilarityKind::NegL2, tau), dist);
      for (const auto& [what, loss] : {std::pair{"similarities", from_sim}, std::pair{"embeddings", from_emb}}) {
        if ((loss - bound) / eps > worst_ratio) {
          worst_ratio = (loss - bound) / eps;
          fill_theory_fields(c, profile, eps, loss);
        }
        if (!(loss >= bound - 1e-12 && loss < bound + eps)) {
          c.passed = false;
          c.detail = std::string("tight ") + what + " loss " + num(loss) + " outside [L*, L*+eps) with L* " +
                     num(bound) + " at batch " + std::to_string(b);
          break;
        }
      }
    }
    c.extra = {{"batches", std::to_string(o.tight_batches)}, {"max_excess_over_eps", num(worst_ratio)}};
    report.cases.push_back(std::move(c));
  }

  for (const double delta : o.deltas) {  // Loss below L* + eps(delta) forces delta-ordering.
    SuiteCase c;
    c.name = "delta_ordering_" + short_num(delta);
    c.delta = delta;
    Rng rng = derive_rng(o.seed, 200 + static_cast<std::uint64_t>(1000 * delta));
    int successes = 0;
    int ordered = 0;
    double worst_ratio = -1.0;
    for (int b = 0; b < o.order_batches; ++b) {
      const int n = random_even(rng, 4, o.order_max_batch);
      const Matrix dist = label_distance_matrix(random_scalar_labels(rng, n), LabelDistanceKind::L1);
      const DistanceProfile profile = distance_profile(dist);
      const double eps = epsilon_for_delta(profile, delta);
      OptimizeOptions opts;
      opts.max_steps = o.optimize_steps;
      opts.delta = delta;
      const OptimizeResult r = optimize_similarities(dist, eps, opts);
      if (!r.reached_target) continue;
      ++successes;
      if (r.report.is_delta_ordered.value_or(false)) {
        ++ordered;
      } else if (c.passed) {
        c.passed = false;
        const auto& v = r.report.first_violation;
        c.detail = "loss below L*+eps(delta) but not delta-ordered at batch " + std::to_string(b) +
                   (v ? " (i,j,k)=(" + std::to_string((*v)[0]) + "," + std::to_string((*v)[1]) + "," +
                            std::to_string((*v)[2]) + ")"
                      : "");
      }
      const double ratio = (r.report.achieved_loss - r.report.lower_bound) / eps;
      if (ratio > worst_ratio) {
        worst_ratio = ratio;
        fill_theory_fields(c, profile, eps, r.report.achieved_loss);
        c.is_delta_ordered = r.report.is_delta_ordered;
      }
    }
    const double rate = o.order_batches > 0 ? static_cast<double>(successes) / o.order_batches : 1.0;
    if (c.passed && rate < 0.9) {
      c.passed = false;
      c.detail = "only " + std::to_string(successes) + "/" + std::to_string(o.order_batches) +
                 " runs reached L* + eps(delta)";
    }
    c.extra = {{"runs", std::to_string(o.order_batches)},
               {"successes", std::to_string(successes)},
               {"ordered", std::to_string(ordered)}};
    report.cases.push_back(std::move(c));
  }

  {  // Starting from the tight construction needs no steps.
    SuiteCase c;
    c.name = "warm_start";
    c.delta = 0.5;
    Matrix y(4, 1);
    y << 0, 0, 1, 1;
    const Matrix dist = label_distance_matrix(y, LabelDistanceKind::L1);
    const DistanceProfile profile = distance_profile(dist);
    const double eps = epsilon_for_delta(profile, 0.5);
    OptimizeOptions opts;
    opts.initial = tight_similarities(dist, eps);
    opts.delta = 0.5;
    const OptimizeResult r = optimize_similarities(dist, eps, opts);
    fill_theory_fields(c, profile, eps, r.report.achieved_loss);
    c.is_delta_ordered = r.report.is_delta_ordered;
    if (!r.reached_target || r.steps != 0 || !r.report.is_delta_ordered.value_or(false)) {
      c.passed = false;
      c.detail = "tight start took " + std::to_string(r.steps) + " steps";
    }
    report.cases.push_back(std::move(c));
  }

  {  // All labels equal and identical embeddings: loss equals L* = ln(2N - 1).
    SuiteCase c;
    c.name = "degenerate_equal_labels";
    double worst = 0.0;
    for (int n = 2; n <= o.max_batch; n += 2) {
      const Matrix dist = Matrix::Zero(n, n);
      const DistanceProfile profile = distance_profile(dist);
      const double loss = loss_under_test(Matrix::Zero(n, n), dist);
      const double expected = std::log(static_cast<double>(n - 1));
      const double bound = lower_bound(profile);
      worst = std::max({worst, std::abs(loss - expected), std::abs(loss - bound)});
      if (n == o.max_batch || !c.passed) fill_theory_fields(c, profile, 0.01, loss);
      if (c.passed && !(loss == expected && bound == expected)) {
        c.passed = false;
        c.detail = "2N=" + std::to_string(n) + ": loss " + num(loss) + " and L* " + num(bound) + " differ from ln(2N-1) " +
                   num(expected) + (loss < bound ? " (lower bound violated)" : "");
        fill_theory_fields(c, profile, 0.01, loss);
      }
    }
    c.extra = {{"max_abs_diff", num(worst)}};
    report.cases.push_back(std::move(c));
  }
  return report;
}

Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double step) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      probe(r, c) = x(r, c) + step;
      const double up = f(probe);
      probe(r, c) = x(r, c) - step;
      const double down = f(probe);
      probe(r, c) = x(r, c);
      g(r, c) = (up - down) / (2.0 * step);
    }
  }
  return g;
}

double max_relative_error(const Matrix& analytic, const Matrix& numeric) {
  if (analytic.rows() != numeric.rows() || analytic.cols() != numeric.cols())
    throw DomainError("gradient shapes differ");
  if (analytic.size() == 0) return 0.0;
  const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-12);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

namespace {

// Every pairwise coordinate gap at least `margin`, so central differences never straddle a kink.
bool away_from_l1_kinks(const Matrix& v, double margin) {
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = i + 1; j < v.rows(); ++j)
      if ((v.row(i) - v.row(j)).cwiseAbs().minCoeff() < margin) return false;
  return true;
}

bool away_from_relu_kinks(const MLP& net, const Matrix& x, double margin) {
  ForwardCache cache;
  net.forward(x, &cache);
  for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l)
    if (cache.pre[l].cwiseAbs().minCoeff() < margin) return false;
  return true;
}

}  // namespace

VerifyReport run_grad_suite(const GradSuiteOptions& o) {
  VerifyReport report;
  for (const SimilarityKind kind : {SimilarityKind::Cosine, SimilarityKind::NegL1, SimilarityKind::NegL2}) {
    SuiteCase c;
    c.name = "supcr_grad_" + std::string(to_string(kind));
    Rng rng = derive_rng(o.seed, 300 + static_cast<std::uint64_t>(kind));
    std::uniform_int_distribution<int> dim(1, o.max_dim);
    std::uniform_real_distribution<double> tau_pick(0.5, 3.0);
    double worst = 0.0;
    for (int k = 0; k < o.configs; ++k) {
      const int n = random_even(rng, 4, o.max_batch);
      const int d = dim(rng);
      const double tau = tau_pick(rng);
      const Matrix labels = random_scalar_labels(rng, n);
      Matrix emb = random_matrix(rng, n, d);
      while (kind == SimilarityKind::NegL1 && !away_from_l1_kinks(emb, 1e-3)) emb = random_matrix(rng, n, d);

      const PairwiseMatrices pm = pairwise_matrices(labels, emb, kind, LabelDistanceKind::L1, tau);
      SimilarityGradient sg = supcr_loss_sim_grad(pm);
      if (o.fault_drop_transpose) sg.grad_sim.triangularView<Eigen::StrictlyLower>().setZero();
      const Matrix analytic = similarity_backward(emb, sg.grad_sim, kind, tau);
      const Matrix numeric = numeric_gradient(
          [&](const Matrix& v) {
            return supcr_loss_fast(pairwise_matrices(labels, v, kind, LabelDistanceKind::L1, tau));
          },
          emb, o.step);
      const double err = max_relative_error(analytic, numeric);
      if (err >= worst) {
        worst = err;
        fill_theory_fields(c, distance_profile(pm.dist), 0.01, sg.value);
      }
    }
    if (!(worst < o.threshold)) {
      c.passed = false;
      c.detail = "max relative error " + num(worst) + " >= " + num(o.threshold);
    }
    c.extra = {{"configs", std::to_string(o.configs)},
               {"max_rel_error", num(worst)},
               {"threshold", num(o.threshold)}};
    report.cases.push_back(std::move(c));
  }

  {  // Plain reverse-mode check of the MLP against a random linear read-out.
    SuiteCase c;
    c.name = "mlp_backward";
    Rng rng = derive_rng(o.seed, 310);
    std::uniform_int_distribution<int> width(1, 8);
    std::uniform_int_distribution<int> depth(1, 3);
    double worst = 0.0;
    for (int k = 0; k < o.mlp_configs; ++k) {
      std::vector<int> widths{width(rng)};
      for (int l = depth(rng); l > 0; --l) widths.push_back(width(rng));
      widths.push_back(width(rng));
      MLP net = MLP::random(widths, rng);
      const int rows = 1 + static_cast<int>(rng() % 6);
      Matrix x = random_matrix(rng, rows, widths.front());
      while (!away_from_relu_kinks(net, x, 1e-3)) x = random_matrix(rng, rows, widths.front());
      const Matrix upstream = random_matrix(rng, rows, widths.back());

      ForwardCache cache;
      net.forward(x, &cache);
      const MlpGradients grads = net.backward(cache, upstream);
      const auto readout = [&](const MLP& m, const Matrix& in) { return m.forward(in).cwiseProduct(upstream).sum(); };

      worst = std::max(worst, max_relative_error(grads.input_grad,
                                                 numeric_gradient([&](const Matrix& in) { return readout(net, in); },
                                                                  x, o.step)));
      const std::vector<Matrix*> params = net.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        const Matrix original = *params[p];
        const Matrix numeric = numeric_gradient(
            [&](const Matrix& value) {
              *params[p] = value;
              const double f = readout(net, x);
              *params[p] = original;
              return f;
            },
            original, o.step);
        worst = std::max(worst, max_relative_error(grads.params[p], numeric));
      }
    }
    if (!(worst < o.threshold)) {
      c.passed = false;
      c.detail = "max relative error " + num(worst) + " >= " + num(o.threshold);
    }
    c.extra = {{"configs", std::to_string(o.mlp_configs)},
               {"max_rel_error", num(worst)},
               {"threshold", num(o.threshold)}};
    report.cases.push_back(std::move(c));
  }
  return report;
}

}  // namespace supcr
