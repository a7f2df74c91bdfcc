#include "supcr/pairwise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace supcr {

SimilarityKind parse_similarity_kind(std::string_view name) {
  if (name == "cosine") return SimilarityKind::Cosine;
  if (name == "neg_l1") return SimilarityKind::NegL1;
  if (name == "neg_l2") return SimilarityKind::NegL2;
  throw ConfigError("unknown similarity kind '" + std::string(name) + "'");
}

LabelDistanceKind parse_label_distance_kind(std::string_view name) {
  if (name == "l1") return LabelDistanceKind::L1;
  if (name == "angular") return LabelDistanceKind::Angular;
  throw ConfigError("unknown label distance kind '" + std::string(name) + "'");
}

std::string_view to_string(SimilarityKind kind) {
  switch (kind) {
    case SimilarityKind::Cosine: return "cosine";
    case SimilarityKind::NegL1: return "neg_l1";
    case SimilarityKind::NegL2: return "neg_l2";
  }
  return "?";
}

std::string_view to_string(LabelDistanceKind kind) {
  return kind == LabelDistanceKind::L1 ? "l1" : "angular";
}

double similarity(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, SimilarityKind kind) {
  if (a.size() != b.size()) throw DomainError("similarity: dimension mismatch");
  switch (kind) {
    case SimilarityKind::Cosine: {
      const double na = a.norm();
      const double nb = b.norm();
      if (na == 0.0 || nb == 0.0) throw DomainError("cosine similarity of a zero vector");
      return a.dot(b) / (na * nb);
    }
    case SimilarityKind::NegL1:
      return -(a - b).lpNorm<1>();
    case SimilarityKind::NegL2:
      return -(a - b).norm();
  }
  return 0.0;
}

Eigen::Vector3d gaze_vector(double pitch_deg, double yaw_deg) {
  const double p = pitch_deg * std::numbers::pi / 180.0;
  const double y = yaw_deg * std::numbers::pi / 180.0;
  return {std::cos(p) * std::sin(y), std::sin(p), std::cos(p) * std::cos(y)};
}

double label_distance(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, LabelDistanceKind kind) {
  if (a.size() != b.size()) throw DomainError("label distance: dimension mismatch");
  if (kind == LabelDistanceKind::L1) return (a - b).lpNorm<1>();
  if (a.size() != 2) throw DomainError("angular label distance needs (pitch, yaw) labels");
  const double c = std::clamp(gaze_vector(a(0), a(1)).dot(gaze_vector(b(0), b(1))), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

Matrix similarity_matrix(const Matrix& embeddings, SimilarityKind kind, double tau) {
  if (!(tau > 0.0)) throw DomainError("temperature must be positive");
  if (!embeddings.allFinite()) throw NumericError("non-finite embeddings");
  const auto n = embeddings.rows();
  Matrix sim = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double s = similarity(embeddings.row(i).transpose(), embeddings.row(j).transpose(), kind) / tau;
      sim(i, j) = s;
      sim(j, i) = s;
    }
  }
  if (kind == SimilarityKind::Cosine) {
    for (Eigen::Index i = 0; i < n; ++i) sim(i, i) = 1.0 / tau;
  }
  return sim;
}

Matrix label_distance_matrix(const Matrix& labels, LabelDistanceKind kind) {
  const auto n = labels.rows();
  Matrix dist = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = label_distance(labels.row(i).transpose(), labels.row(j).transpose(), kind);
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  return dist;
}

PairwiseMatrices pairwise_matrices(const Matrix& labels, const Matrix& embeddings, SimilarityKind sim_kind,
                                   LabelDistanceKind dist_kind, double tau) {
  if (labels.rows() != embeddings.rows()) throw DomainError("pairwise: label and embedding row counts differ");
  return {similarity_matrix(embeddings, sim_kind, tau), label_distance_matrix(labels, dist_kind), tau};
}

}  // namespace supcr
