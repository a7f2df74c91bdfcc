#include "supcr/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "running_mean.hpp"

namespace supcr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == kNegInf) return kNegInf;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_inputs(const PairwiseMatrices& pm) {
  if (pm.sim.rows() != pm.sim.cols() || pm.dist.rows() != pm.dist.cols() || pm.sim.rows() != pm.dist.rows())
    throw DomainError("pairwise matrices must be square and equally sized");
  if (pm.sim.rows() < 2) throw BatchSizeError("loss needs at least 2 batch rows");
  if (!pm.sim.allFinite() || !pm.dist.allFinite()) throw NumericError("non-finite similarity or distance");
}

bool in_denominator(double d_ik, double d_ij, bool same, DenominatorMask mask) {
  const bool tie = distances_tie(d_ik, d_ij);
  switch (mask) {
    case DenominatorMask::Inclusive: return d_ik >= d_ij || tie;
    case DenominatorMask::StrictPlusSelf: return same || (d_ik > d_ij && !tie);
  }
  return false;
}

// One anchor's tie groups in ascending label distance, with suffix
// log-sum-exps: suffix_lse[g] = log sum_{k in groups >= g} exp(s_ik).
struct AnchorSweep {
  std::vector<int> order;        // k != i, ascending distance
  std::vector<int> group_of;     // indexed by position in `order`
  std::vector<int> group_size;
  std::vector<double> suffix_lse;
};

AnchorSweep sweep_anchor(const PairwiseMatrices& pm, int i) {
  const int n = pm.size();
  AnchorSweep sw;
  sw.order.reserve(static_cast<std::size_t>(n - 1));
  for (int k = 0; k < n; ++k)
    if (k != i) sw.order.push_back(k);
  std::sort(sw.order.begin(), sw.order.end(), [&](int a, int b) {
    const double da = pm.dist(i, a);
    const double db = pm.dist(i, b);
    return da < db || (da == db && a < b);
  });

  sw.group_of.resize(sw.order.size());
  double rep = 0.0;
  for (std::size_t p = 0; p < sw.order.size(); ++p) {
    const double d = pm.dist(i, sw.order[p]);
    if (p == 0 || !distances_tie(d, rep)) {
      rep = d;
      sw.group_size.push_back(0);
    }
    sw.group_of[p] = static_cast<int>(sw.group_size.size()) - 1;
    ++sw.group_size.back();
  }

  // Group-wise log-sum-exp, then suffix accumulation from the farthest group.
  const std::size_t groups = sw.group_size.size();
  std::vector<double> group_max(groups, kNegInf);
  for (std::size_t p = 0; p < sw.order.size(); ++p) {
    auto& m = group_max[static_cast<std::size_t>(sw.group_of[p])];
    m = std::max(m, pm.sim(i, sw.order[p]));
  }
  std::vector<double> group_sum(groups, 0.0);
  for (std::size_t p = 0; p < sw.order.size(); ++p) {
    const auto g = static_cast<std::size_t>(sw.group_of[p]);
    group_sum[g] += std::exp(pm.sim(i, sw.order[p]) - group_max[g]);
  }
  sw.suffix_lse.assign(groups, kNegInf);
  double running = kNegInf;
  for (std::size_t g = groups; g-- > 0;) {
    running = log_add_exp(running, group_max[g] + std::log(group_sum[g]));
    sw.suffix_lse[g] = running;
  }
  return sw;
}

// Mean over j of (s_ij - log denominator_ij) for one anchor.
double anchor_log_likelihood(const PairwiseMatrices& pm, int i, const AnchorSweep& sw) {
  RunningMean mean;
  for (std::size_t p = 0; p < sw.order.size(); ++p)
    mean.add(pm.sim(i, sw.order[p]) - sw.suffix_lse[static_cast<std::size_t>(sw.group_of[p])]);
  return mean.value();
}

std::vector<int> pair_classes(int n) {
  if (n % 2 != 0) throw DomainError("two-view layout needs an even number of rows");
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) ids[static_cast<std::size_t>(r)] = r / 2;
  return ids;
}

}  // namespace

double supcr_loss_naive(const PairwiseMatrices& pm, DenominatorMask mask) {
  check_inputs(pm);
  const int n = pm.size();
  RunningMean total;
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    RunningMean anchor;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      terms.clear();
      for (int k = 0; k < n; ++k) {
        if (k != i && in_denominator(pm.dist(i, k), pm.dist(i, j), k == j, mask)) terms.push_back(pm.sim(i, k));
      }
      const double m = *std::max_element(terms.begin(), terms.end());
      double sum = 0.0;
      for (double t : terms) sum += std::exp(t - m);
      anchor.add(pm.sim(i, j) - (m + std::log(sum)));
    }
    total.add(anchor.value());
  }
  return -total.value();
}

double supcr_loss_fast(const PairwiseMatrices& pm) {
  check_inputs(pm);
  const int n = pm.size();
  RunningMean total;
  for (int i = 0; i < n; ++i) total.add(anchor_log_likelihood(pm, i, sweep_anchor(pm, i)));
  return -total.value();
}

SimilarityGradient supcr_loss_sim_grad(const PairwiseMatrices& pm) {
  check_inputs(pm);
  const int n = pm.size();
  const double c = 1.0 / (static_cast<double>(n) * (n - 1));
  SimilarityGradient out;
  out.grad_sim = Matrix::Zero(n, n);
  RunningMean total;
  for (int i = 0; i < n; ++i) {
    const AnchorSweep sw = sweep_anchor(pm, i);
    total.add(anchor_log_likelihood(pm, i, sw));

    // k in group g sits in the denominators of every j in groups <= g, so
    // dL/ds_ik = c * (-1 + exp(s_ik) * sum_{g' <= g} n_g' exp(-suffix_lse[g'])).
    const std::size_t groups = sw.group_size.size();
    std::vector<double> log_prefix(groups);
    double running = kNegInf;
    for (std::size_t g = 0; g < groups; ++g) {
      running = log_add_exp(running, std::log(static_cast<double>(sw.group_size[g])) - sw.suffix_lse[g]);
      log_prefix[g] = running;
    }
    for (std::size_t p = 0; p < sw.order.size(); ++p) {
      const int k = sw.order[p];
      const double w = std::exp(pm.sim(i, k) + log_prefix[static_cast<std::size_t>(sw.group_of[p])]);
      out.grad_sim(i, k) = c * (w - 1.0);
    }
  }
  out.value = -total.value();
  return out;
}

Matrix similarity_backward(const Matrix& embeddings, const Matrix& grad_sim, SimilarityKind kind, double tau) {
  const auto n = embeddings.rows();
  if (grad_sim.rows() != n || grad_sim.cols() != n) throw DomainError("similarity_backward: shape mismatch");
  Matrix grad = Matrix::Zero(n, embeddings.cols());
  Vector norms;
  if (kind == SimilarityKind::Cosine) {
    norms = embeddings.rowwise().norm();
    if ((norms.array() == 0.0).any()) throw DomainError("cosine similarity of a zero vector");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double w = (grad_sim(i, j) + grad_sim(j, i)) / tau;
      if (w == 0.0) continue;
      switch (kind) {
        case SimilarityKind::NegL2: {
          const RowVector diff = embeddings.row(i) - embeddings.row(j);
          const double len = diff.norm();
          if (len < 1e-12) break;
          grad.row(i) -= (w / len) * diff;
          grad.row(j) += (w / len) * diff;
          break;
        }
        case SimilarityKind::NegL1: {
          const RowVector sign = (embeddings.row(i) - embeddings.row(j)).array().sign().matrix();
          grad.row(i) -= w * sign;
          grad.row(j) += w * sign;
          break;
        }
        case SimilarityKind::Cosine: {
          const RowVector ui = embeddings.row(i) / norms(i);
          const RowVector uj = embeddings.row(j) / norms(j);
          const double cs = ui.dot(uj);
          grad.row(i) += (w / norms(i)) * (uj - cs * ui);
          grad.row(j) += (w / norms(j)) * (ui - cs * uj);
          break;
        }
      }
    }
  }
  return grad;
}

LossOutput supcr_loss_grad(const Matrix& labels, const Matrix& embeddings, SimilarityKind sim_kind,
                           LabelDistanceKind dist_kind, double tau) {
  const PairwiseMatrices pm = pairwise_matrices(labels, embeddings, sim_kind, dist_kind, tau);
  SimilarityGradient sg = supcr_loss_sim_grad(pm);
  LossOutput out{sg.value, similarity_backward(embeddings, sg.grad_sim, sim_kind, tau)};
  if (!std::isfinite(out.value) || !out.grad->allFinite()) throw NumericError("non-finite loss or gradient");
  return out;
}

SimilarityGradient supcon_loss_sim_grad(const PairwiseMatrices& pm, std::span<const int> class_ids) {
  check_inputs(pm);
  const int n = pm.size();
  if (static_cast<int>(class_ids.size()) != n) throw DomainError("supcon: one class id per row required");
  SimilarityGradient out;
  out.grad_sim = Matrix::Zero(n, n);
  RunningMean total;
  for (int i = 0; i < n; ++i) {
    double m = kNegInf;
    int positives = 0;
    double positive_sum = 0.0;
    for (int a = 0; a < n; ++a) {
      if (a == i) continue;
      m = std::max(m, pm.sim(i, a));
      if (class_ids[static_cast<std::size_t>(a)] == class_ids[static_cast<std::size_t>(i)]) {
        ++positives;
        positive_sum += pm.sim(i, a);
      }
    }
    if (positives == 0) throw DomainError("supcon: anchor " + std::to_string(i) + " has no positive");
    double sum = 0.0;
    for (int a = 0; a < n; ++a)
      if (a != i) sum += std::exp(pm.sim(i, a) - m);
    const double lse = m + std::log(sum);
    total.add(lse - positive_sum / positives);
    for (int a = 0; a < n; ++a) {
      if (a == i) continue;
      double g = std::exp(pm.sim(i, a) - lse);
      if (class_ids[static_cast<std::size_t>(a)] == class_ids[static_cast<std::size_t>(i)]) g -= 1.0 / positives;
      out.grad_sim(i, a) = g / n;
    }
  }
  out.value = total.value();
  return out;
}

double supcon_loss(const PairwiseMatrices& pm, std::span<const int> class_ids) {
  return supcon_loss_sim_grad(pm, class_ids).value;
}

SimilarityGradient simclr_loss_sim_grad(const PairwiseMatrices& pm) {
  const auto ids = pair_classes(pm.size());
  return supcon_loss_sim_grad(pm, ids);
}

double simclr_loss(const PairwiseMatrices& pm) { return simclr_loss_sim_grad(pm).value; }

std::vector<int> bin_labels(const Matrix& labels, int num_bins, double lo, double hi) {
  if (num_bins < 2) throw DomainError("bin_labels: need at least 2 bins");
  if (!(hi > lo)) throw DomainError("bin_labels: empty range");
  const double width = (hi - lo) / num_bins;
  std::vector<int> out(static_cast<std::size_t>(labels.rows()));
  for (Eigen::Index r = 0; r < labels.rows(); ++r) {
    const double pos = std::floor((labels(r, 0) - lo) / width);
    out[static_cast<std::size_t>(r)] = static_cast<int>(std::clamp(pos, 0.0, static_cast<double>(num_bins - 1)));
  }
  return out;
}

}  // namespace supcr
