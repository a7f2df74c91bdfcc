#pragma once

#include <optional>
#include <span>
#include <vector>

#include "supcr/pairwise.hpp"

namespace supcr {

/// Rule deciding which k enter the denominator for the pair (i, j).
/// Only `Inclusive` is the real loss; the other rule exists so verification
/// suites can prove they catch a broken mask.
enum class DenominatorMask {
  Inclusive,        // d(i,k) >= d(i,j)
  StrictPlusSelf,   // d(i,k) > d(i,j), plus k = j (fault injection)
};

struct LossOutput {
  double value = 0.0;
  std::optional<Matrix> grad;  // dL/dv, same shape as the embeddings
};

/// Loss value together with dL/dS for every (anchor, other) entry of the
/// similarity matrix. The diagonal of `grad_sim` is zero.
struct SimilarityGradient {
  double value = 0.0;
  Matrix grad_sim;
};

// Reference triple loop. O((2N)^3).
double supcr_loss_naive(const PairwiseMatrices& pm, DenominatorMask mask = DenominatorMask::Inclusive);

// Per anchor: sort by label distance, one suffix log-sum-exp sweep over tie groups.
double supcr_loss_fast(const PairwiseMatrices& pm);

SimilarityGradient supcr_loss_sim_grad(const PairwiseMatrices& pm);

/// Chains dL/dS through S = sim(v_i, v_j) / tau. `grad_sim` need not be
/// symmetric; entry (a, b) and (b, a) both act on the same similarity.
Matrix similarity_backward(const Matrix& embeddings, const Matrix& grad_sim, SimilarityKind kind, double tau);

LossOutput supcr_loss_grad(const Matrix& labels, const Matrix& embeddings, SimilarityKind sim_kind,
                           LabelDistanceKind dist_kind, double tau);

/// SupCon with the sum over positives outside the log.
double supcon_loss(const PairwiseMatrices& pm, std::span<const int> class_ids);
SimilarityGradient supcon_loss_sim_grad(const PairwiseMatrices& pm, std::span<const int> class_ids);

/// NT-Xent: the only positive of row 2n is row 2n+1 and vice versa.
double simclr_loss(const PairwiseMatrices& pm);
SimilarityGradient simclr_loss_sim_grad(const PairwiseMatrices& pm);

/// Equal-width bins over [lo, hi] on the first label dimension; values
/// outside are clamped to the boundary bins and hi falls in the last bin.
std::vector<int> bin_labels(const Matrix& labels, int num_bins, double lo, double hi);

}  // namespace supcr
