#include "supcr/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include "supcr/loss.hpp"
#include "supcr/pairwise.hpp"
#include "running_mean.hpp"

namespace supcr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct AnchorGroups {
  std::vector<int> group;  // per column; -1 on the anchor itself
  std::vector<double> representative;
  std::vector<int> count;
};

AnchorGroups group_anchor(const Matrix& dist, int i) {
  const int n = static_cast<int>(dist.rows());
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k)
    if (k != i) order.push_back(k);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return dist(i, a) < dist(i, b) || (dist(i, a) == dist(i, b) && a < b);
  });
  AnchorGroups g;
  g.group.assign(static_cast<std::size_t>(n), -1);
  for (int k : order) {
    const double d = dist(i, k);
    if (g.representative.empty() || !distances_tie(d, g.representative.back())) {
      g.representative.push_back(d);
      g.count.push_back(0);
    }
    g.group[static_cast<std::size_t>(k)] = static_cast<int>(g.count.size()) - 1;
    ++g.count.back();
  }
  return g;
}

void check_distance_matrix(const Matrix& dist) {
  if (dist.rows() != dist.cols()) throw DomainError("distance matrix must be square");
  if (dist.rows() < 2) throw BatchSizeError("distance matrix needs at least 2 rows");
  if (!dist.allFinite()) throw NumericError("non-finite label distance");
  for (Eigen::Index i = 0; i < dist.rows(); ++i) {
    if (dist(i, i) != 0.0) throw DomainError("distance matrix diagonal must be zero");
    for (Eigen::Index j = 0; j < dist.cols(); ++j) {
      if (dist(i, j) < 0.0) throw DomainError("negative label distance");
      if (!distances_tie(dist(i, j), dist(j, i))) throw DomainError("asymmetric label distance matrix");
    }
  }
}

// Gap conditions of the tight construction: exact ties for equal distances,
// more than gamma between consecutive groups.
bool satisfies_gaps(const Matrix& sim, const Matrix& dist, double gamma, double tie_slack) {
  const int n = static_cast<int>(dist.rows());
  for (int i = 0; i < n; ++i) {
    const AnchorGroups g = group_anchor(dist, i);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      for (int k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        const int gj = g.group[static_cast<std::size_t>(j)];
        const int gk = g.group[static_cast<std::size_t>(k)];
        if (gj == gk && std::abs(sim(i, j) - sim(i, k)) > tie_slack) return false;
        if (gj < gk && !(sim(i, j) > sim(i, k) + gamma)) return false;
      }
    }
  }
  return true;
}

// Smallest positive spacing between distinct values of all anchors' distance
// representatives; +inf when only one distinct value exists.
double smallest_distance_gap(const Matrix& dist) {
  std::vector<double> values;
  for (int i = 0; i < dist.rows(); ++i) {
    const AnchorGroups g = group_anchor(dist, i);
    values.insert(values.end(), g.representative.begin(), g.representative.end());
  }
  std::sort(values.begin(), values.end());
  double gap = kInf;
  for (std::size_t p = 1; p < values.size(); ++p) {
    if (!distances_tie(values[p], values[p - 1])) gap = std::min(gap, values[p] - values[p - 1]);
  }
  return gap;
}

}  // namespace

int DistanceProfile::min_count() const {
  int m = std::numeric_limits<int>::max();
  for (const auto& a : anchors)
    for (int c : a.counts) m = std::min(m, c);
  return m;
}

DistanceProfile distance_profile(const Matrix& dist) {
  check_distance_matrix(dist);
  DistanceProfile profile;
  const int n = static_cast<int>(dist.rows());
  profile.anchors.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    AnchorGroups g = group_anchor(dist, i);
    profile.anchors.push_back({std::move(g.representative), std::move(g.count)});
  }
  return profile;
}

double lower_bound(const DistanceProfile& profile) {
  const double others = profile.batch_size() - 1;
  RunningMean mean;
  for (const auto& a : profile.anchors) {
    double anchor = 0.0;
    for (int c : a.counts) anchor += (c / others) * std::log(static_cast<double>(c));
    mean.add(anchor);
  }
  return mean.value();
}

double epsilon_for_delta(const DistanceProfile& profile, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  const double n = profile.batch_size();
  const double spread_term = 2.0 * std::log((1.0 + std::exp(delta)) / 2.0) - delta;
  // log(1 + 1/(n c)) is decreasing in n, so the largest multiplicity binds.
  int max_count = 1;
  for (const auto& a : profile.anchors)
    for (int c : a.counts) max_count = std::max(max_count, c);
  const double gap_term = std::log1p(1.0 / (max_count * std::exp(delta + 1.0 / delta)));
  return std::min(gap_term, spread_term) / (n * (n - 1));
}

double gamma_for_epsilon(const DistanceProfile& profile, double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  return std::log(profile.batch_size() / (profile.min_count() * epsilon));
}

OrderCheck delta_ordered(const Matrix& sim, const Matrix& dist, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  if (sim.rows() != dist.rows() || sim.cols() != dist.cols()) throw DomainError("S and D shapes differ");
  const int n = static_cast<int>(dist.rows());
  const double wide = 1.0 / delta;
  OrderCheck out;
  out.min_cross_gap = kInf;
  for (int i = 0; i < n; ++i) {
    const AnchorGroups g = group_anchor(dist, i);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      for (int k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        const int gj = g.group[static_cast<std::size_t>(j)];
        const int gk = g.group[static_cast<std::size_t>(k)];
        const double diff = sim(i, j) - sim(i, k);
        bool ok = true;
        if (gj == gk) {
          out.max_within_spread = std::max(out.max_within_spread, std::abs(diff));
          ok = std::abs(diff) < delta;
        } else if (gj < gk) {
          out.min_cross_gap = std::min(out.min_cross_gap, diff);
          ok = diff > wide;
        } else {
          ok = diff < -wide;
        }
        if (!ok && !out.first_violation) out.first_violation = std::array<int, 3>{i, j, k};
      }
    }
  }
  out.ordered = !out.first_violation.has_value();
  return out;
}

Matrix tight_similarities(const Matrix& dist, double epsilon) {
  const DistanceProfile profile = distance_profile(dist);
  const double gamma = gamma_for_epsilon(profile, epsilon);
  const double step = std::max(gamma, 0.0) + 1.0;
  const int n = static_cast<int>(dist.rows());

  Matrix ranked = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const AnchorGroups g = group_anchor(dist, i);
    for (int k = 0; k < n; ++k)
      if (k != i) ranked(i, k) = -step * g.group[static_cast<std::size_t>(k)];
  }
  if (ranked == ranked.transpose()) return ranked;

  const Matrix averaged = 0.5 * (ranked + ranked.transpose());
  if (satisfies_gaps(averaged, dist, gamma, 0.0)) return averaged;

  // Rank averaging broke a gap: scale the metric itself instead.
  const double spacing = smallest_distance_gap(dist);
  const Matrix scaled = -(step / spacing) * dist;
  if (satisfies_gaps(scaled, dist, gamma, 1e-9 * step)) return scaled;
  throw DomainError("tight_similarities: no symmetric construction satisfies the gap conditions");
}

Matrix tight_embeddings_1d(std::span<const double> labels, double epsilon, double tau) {
  if (!(tau > 0.0)) throw DomainError("temperature must be positive");
  const auto n = static_cast<Eigen::Index>(labels.size());
  Matrix y(n, 1);
  for (Eigen::Index r = 0; r < n; ++r) y(r, 0) = labels[static_cast<std::size_t>(r)];
  const Matrix dist = label_distance_matrix(y, LabelDistanceKind::L1);
  const DistanceProfile profile = distance_profile(dist);
  const double gamma = gamma_for_epsilon(profile, epsilon);
  const double spacing = smallest_distance_gap(dist);
  if (!std::isfinite(spacing)) return Matrix::Zero(n, 1);
  const double c = tau * (std::max(gamma, 0.0) + 1.0) / spacing;
  return c * y;
}

namespace {

double loss_of(const Matrix& sim, const Matrix& dist) { return supcr_loss_fast({sim, dist, 1.0}); }

// Free parameters are the strict upper triangle of S, row-major.
class PairObjective final : public ceres::FirstOrderFunction {
 public:
  explicit PairObjective(const Matrix& dist) : dist_(dist), n_(static_cast<int>(dist.rows())) {}

  int NumParameters() const override { return n_ * (n_ - 1) / 2; }

  bool Evaluate(const double* params, double* cost, double* gradient) const override {
    const Matrix sim = unpack(params);
    const SimilarityGradient sg = supcr_loss_sim_grad({sim, dist_, 1.0});
    if (!std::isfinite(sg.value)) return false;
    *cost = sg.value;
    if (gradient != nullptr) {
      int p = 0;
      for (int i = 0; i < n_; ++i)
        for (int k = i + 1; k < n_; ++k) gradient[p++] = sg.grad_sim(i, k) + sg.grad_sim(k, i);
    }
    return true;
  }

  Matrix unpack(const double* params) const {
    Matrix sim = Matrix::Zero(n_, n_);
    int p = 0;
    for (int i = 0; i < n_; ++i)
      for (int k = i + 1; k < n_; ++k) sim(i, k) = sim(k, i) = params[p++];
    return sim;
  }

  std::vector<double> pack(const Matrix& sim) const {
    std::vector<double> params;
    params.reserve(static_cast<std::size_t>(NumParameters()));
    for (int i = 0; i < n_; ++i)
      for (int k = i + 1; k < n_; ++k) params.push_back(0.5 * (sim(i, k) + sim(k, i)));
    return params;
  }

 private:
  Matrix dist_;
  int n_;
};

class StopBelow final : public ceres::IterationCallback {
 public:
  StopBelow(double threshold, std::vector<double>& trace) : threshold_(threshold), trace_(trace) {}

  ceres::CallbackReturnType operator()(const ceres::IterationSummary& summary) override {
    if (summary.iteration > 0) trace_.push_back(summary.cost);
    return summary.cost < threshold_ ? ceres::SOLVER_TERMINATE_SUCCESSFULLY : ceres::SOLVER_CONTINUE;
  }

 private:
  double threshold_;
  std::vector<double>& trace_;
};

}  // namespace

// epsilon(delta) is increasing in delta.
std::optional<double> certified_delta(const DistanceProfile& profile, double excess) {
  const double hi_limit = 1.0 - 1e-9;
  if (!(epsilon_for_delta(profile, hi_limit) > excess)) return std::nullopt;
  double lo = 1e-6;
  double hi = hi_limit;
  if (epsilon_for_delta(profile, lo) > excess) return lo;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (epsilon_for_delta(profile, mid) > excess ? hi : lo) = mid;
  }
  return hi;
}

OptimizeResult optimize_similarities(const Matrix& dist, double target_epsilon, const OptimizeOptions& options) {
  if (!(target_epsilon > 0.0)) throw DomainError("target epsilon must be positive");
  const DistanceProfile profile = distance_profile(dist);
  const double bound = lower_bound(profile);
  const int n = static_cast<int>(dist.rows());

  OptimizeResult result;
  result.sim = options.initial ? *options.initial : Matrix::Zero(n, n);
  if (result.sim.rows() != n || result.sim.cols() != n) throw DomainError("initial S has the wrong shape");
  result.sim.diagonal().setZero();

  double loss = loss_of(result.sim, dist);
  result.loss_trace.push_back(loss);
  if (!(loss < bound + target_epsilon) && options.max_steps > 0 && n > 1) {
    auto* objective = new PairObjective(dist);
    std::vector<double> params = objective->pack(result.sim);
    const ceres::GradientProblem problem(objective);

    StopBelow stop(bound + target_epsilon, result.loss_trace);
    ceres::GradientProblemSolver::Options solver;
    solver.line_search_direction_type = ceres::LBFGS;
    solver.max_num_iterations = options.max_steps;
    solver.function_tolerance = 0.0;
    solver.gradient_tolerance = 0.0;
    solver.parameter_tolerance = 0.0;
    solver.logging_type = ceres::SILENT;
    solver.callbacks.push_back(&stop);
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(solver, problem, params.data(), &summary);

    result.sim = objective->unpack(params.data());
    loss = loss_of(result.sim, dist);
    result.steps = static_cast<int>(result.loss_trace.size()) - 1;
  }
  result.reached_target = loss < bound + target_epsilon;

  TheoryReport& report = result.report;
  report.lower_bound = bound;
  report.epsilon = target_epsilon;
  report.gamma = gamma_for_epsilon(profile, target_epsilon);
  report.achieved_loss = loss;
  const std::optional<double> delta = options.delta ? options.delta : certified_delta(profile, loss - bound);
  report.delta = delta.value_or(0.0);
  if (delta) {
    const OrderCheck check = delta_ordered(result.sim, dist, *delta);
    report.min_cross_gap = check.min_cross_gap;
    report.max_within_spread = check.max_within_spread;
    report.first_violation = check.first_violation;
    if (result.reached_target) report.is_delta_ordered = check.ordered;
  }
  return result;
}

}  // namespace supcr
