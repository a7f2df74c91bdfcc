#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "supcr/types.hpp"

namespace supcr {

/// Per anchor i: distinct label distances to the other rows in ascending
/// order, with how many rows sit at each distance. Counts sum to 2N - 1.
struct DistanceProfile {
  struct Anchor {
    std::vector<double> distances;
    std::vector<int> counts;
  };
  std::vector<Anchor> anchors;

  int batch_size() const { return static_cast<int>(anchors.size()); }
  int min_count() const;
};

DistanceProfile distance_profile(const Matrix& dist);

/// L* = sum_i sum_m n_im ln n_im / (2N (2N - 1)).
double lower_bound(const DistanceProfile& profile);

/// Loss slack below which delta-ordering is guaranteed.
double epsilon_for_delta(const DistanceProfile& profile, double delta);

/// Similarity gap that puts a configuration within epsilon of L*.
double gamma_for_epsilon(const DistanceProfile& profile, double epsilon);

struct OrderCheck {
  bool ordered = false;
  std::optional<std::array<int, 3>> first_violation;  // (i, j, k)
  // Raw statistics over all anchors; the verdict is min_cross_gap > 1/delta
  // and max_within_spread < delta.
  double min_cross_gap = 0.0;      // min s_ij - s_ik over d_ij < d_ik (+inf if none)
  double max_within_spread = 0.0;  // max |s_ij - s_ik| over tied d_ij = d_ik
};

OrderCheck delta_ordered(const Matrix& sim, const Matrix& dist, double delta);

/// Similarity matrix within epsilon of L*. Ties get equal similarity and each
/// farther tie group sits more than gamma below the nearer one.
Matrix tight_similarities(const Matrix& dist, double epsilon);

/// 2N x 1 embeddings v = c y realizing the tight construction under negative
/// L2 similarity with temperature tau. All-equal distances give zeros.
Matrix tight_embeddings_1d(std::span<const double> labels, double epsilon, double tau);

/// Smallest delta in (0, 1) whose epsilon(delta) exceeds `excess`, found by
/// bisection; nullopt when even delta -> 1 is not certified.
std::optional<double> certified_delta(const DistanceProfile& profile, double excess);

struct TheoryReport {
  double lower_bound = 0.0;
  double epsilon = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
  double achieved_loss = 0.0;
  std::optional<bool> is_delta_ordered;
  std::optional<std::array<int, 3>> first_violation;
  double min_cross_gap = 0.0;
  double max_within_spread = 0.0;
};

struct OptimizeOptions {
  int max_steps = 3000;
  std::optional<Matrix> initial;
  // Delta to certify. When unset, the smallest delta with epsilon(delta) above
  // the achieved excess is used.
  std::optional<double> delta;
};

struct OptimizeResult {
  Matrix sim;
  TheoryReport report;
  int steps = 0;
  bool reached_target = false;
  std::vector<double> loss_trace;  // loss before the first step and after every step
};

/// Descent on the free symmetric off-diagonal entries of S with D fixed.
OptimizeResult optimize_similarities(const Matrix& dist, double target_epsilon, const OptimizeOptions& options = {});

}  // namespace supcr
