#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "supcr/types.hpp"

namespace supcr {

enum class GeneratorKind { Linear, Norm, Angular };

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::Linear;
  int d_in = 8;
  int d_t = 1;
  double noise = 0.1;  // label noise standard deviation
  int size = 1000;
  // LINEAR only: explicit map y = W x + b. Drawn from the seed when absent.
  std::optional<Matrix> weight;  // d_t x d_in
  std::optional<Vector> bias;    // d_t
};

struct Sample {
  Vector features;
  Vector label;
};

/// Row-major sample storage: row n of `features`/`labels` is sample n.
struct Dataset {
  Matrix features;  // size x d_in
  Matrix labels;    // size x d_t
  std::string metadata;

  int size() const { return static_cast<int>(features.rows()); }
  int d_in() const { return static_cast<int>(features.cols()); }
  int d_t() const { return static_cast<int>(labels.cols()); }
  Sample sample(int i) const { return {features.row(i).transpose(), labels.row(i).transpose()}; }
  Dataset subset(std::span<const int> indices) const;
  /// Per-feature standard deviation (population); used to scale augmentation jitter.
  Vector feature_std() const;
};

/// Deterministic label map behind generate_synthetic_dataset.
class SyntheticGenerator {
 public:
  SyntheticGenerator(const GeneratorSpec& spec, std::uint64_t seed);

  Vector noiseless_label(const Vector& x) const;
  const GeneratorSpec& spec() const { return spec_; }
  const Matrix& weight() const { return weight_; }

 private:
  GeneratorSpec spec_;
  Matrix weight_;  // LINEAR: d_t x d_in, ANGULAR: 2 x d_in projection
  Vector bias_;
};

Dataset generate_synthetic_dataset(const GeneratorSpec& spec, std::uint64_t seed);

struct AugmentationSpec {
  double gaussian_sigma = 0.1;  // fraction of per-feature std
  double dropout_prob = 0.1;
  double scale_lo = 0.9;
  double scale_hi = 1.1;

  void validate() const;
  static AugmentationSpec identity() { return {0.0, 0.0, 1.0, 1.0}; }
};

/// Jitter, then feature dropout, then a global random scale. Labels are never touched.
Vector augment(const Sample& sample, const AugmentationSpec& spec, std::span<const double> feature_std,
               Rng& rng);
Vector augment(const Sample& sample, const AugmentationSpec& spec, Rng& rng);

/// Rows 2n and 2n+1 are two independent views of dataset sample indices[n].
struct TwoViewBatch {
  Matrix inputs;  // 2N x d_in
  Matrix labels;  // 2N x d_t
  std::vector<int> source_indices;  // dataset row behind each batch row

  int num_views() const { return static_cast<int>(inputs.rows()); }
};

TwoViewBatch build_two_view_batch(const Dataset& dataset, std::span<const int> indices,
                                  const AugmentationSpec& spec, Rng& rng);
TwoViewBatch build_two_view_batch(const Dataset& dataset, std::span<const int> indices,
                                  const AugmentationSpec& spec, std::span<const double> feature_std,
                                  Rng& rng);

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

DatasetSplit split_dataset(const Dataset& dataset, std::array<double, 3> fractions, std::uint64_t seed);

void write_dataset_csv(const Dataset& dataset, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

/// 17 significant digits; every numeric file output goes through this.
std::string format_double(double value);

}  // namespace supcr
