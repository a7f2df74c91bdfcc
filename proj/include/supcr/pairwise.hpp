#pragma once

#include <string_view>

#include "supcr/types.hpp"

namespace supcr {

enum class SimilarityKind { Cosine, NegL1, NegL2 };
enum class LabelDistanceKind { L1, Angular };

SimilarityKind parse_similarity_kind(std::string_view name);
LabelDistanceKind parse_label_distance_kind(std::string_view name);
std::string_view to_string(SimilarityKind kind);
std::string_view to_string(LabelDistanceKind kind);

/// Label distances closer than this are one tie group.
inline bool distances_tie(double a, double b) {
  const double scale = a > b ? a : b;
  const double diff = a > b ? a - b : b - a;
  return diff <= 1e-9 * (scale > 1.0 ? scale : 1.0);
}

double similarity(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, SimilarityKind kind);

/// Unit gaze direction for (pitch, yaw) given in degrees.
Eigen::Vector3d gaze_vector(double pitch_deg, double yaw_deg);

/// L1 over all label dims, or the angle in degrees between gaze vectors (d_t = 2).
double label_distance(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, LabelDistanceKind kind);

/// `sim` already carries the 1/tau factor. Diagonals are never read by the losses.
struct PairwiseMatrices {
  Matrix sim;
  Matrix dist;
  double tau = 1.0;

  int size() const { return static_cast<int>(sim.rows()); }
};

/// Rows of `embeddings` and `labels` are batch members.
Matrix similarity_matrix(const Matrix& embeddings, SimilarityKind kind, double tau);
Matrix label_distance_matrix(const Matrix& labels, LabelDistanceKind kind);

PairwiseMatrices pairwise_matrices(const Matrix& labels, const Matrix& embeddings, SimilarityKind sim_kind,
                                   LabelDistanceKind dist_kind, double tau);

}  // namespace supcr
