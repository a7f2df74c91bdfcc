#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "supcr/batch.hpp"
#include "supcr/loss.hpp"
#include "supcr/model.hpp"

namespace supcr {

enum class Scheme { LinearProbing, FineTuning, Regularization, Direct };
enum class EncoderLoss { SupCR, SupCon, SimCLR };

Scheme parse_scheme(std::string_view name);
EncoderLoss parse_encoder_loss(std::string_view name);
std::string_view to_string(Scheme scheme);
std::string_view to_string(EncoderLoss loss);

struct TrainConfig {
  Scheme scheme = Scheme::LinearProbing;
  EncoderLoss encoder_loss = EncoderLoss::SupCR;
  RegressionLoss regression;
  double tau = 2.0;
  double lambda = 1.0;  // weight of the contrastive term in the regularization scheme
  int epochs_encoder = 200;
  int epochs_predictor = 100;
  int epochs_finetune = 100;
  int batch_size = 128;  // N; each step sees 2N augmented rows
  SimilarityKind sim_kind = SimilarityKind::NegL2;
  LabelDistanceKind dist_kind = LabelDistanceKind::L1;
  AugmentationSpec augmentation;
  std::vector<int> hidden = {64, 64, 64};
  int embed_dim = 16;
  int projection_dim = 0;  // 0 disables the projection head
  OptimizerConfig encoder_opt;
  OptimizerConfig predictor_opt;
  int num_bins = 10;  // SupCon classes
  std::uint64_t seed = 42;

  void validate() const;
};

using TrainLog = std::function<void(const std::string&)>;

struct EncoderResult {
  MLP encoder;
  std::optional<MLP> head;         // training-only; never used at inference
  std::vector<double> epoch_loss;  // mean contrastive loss per epoch
};

struct TrainedModel {
  MLP encoder;
  LinearPredictor predictor;
  LabelDistanceKind dist_kind = LabelDistanceKind::L1;
  std::vector<double> encoder_loss;  // contrastive pretraining trace, when the scheme has one
};

/// Contrastive loss and dL/dz for one two-view batch. SupCon bins labels over
/// [bin_lo, bin_hi].
LossOutput contrastive_loss(EncoderLoss kind, const Matrix& labels, const Matrix& z, const TrainConfig& config,
                            double bin_lo, double bin_hi);

EncoderResult train_encoder(const Dataset& train, const TrainConfig& config, const TrainLog& log = {});

/// Encoder is read-only; only the linear predictor is fit.
LinearPredictor train_predictor(const MLP& encoder, const Dataset& train, const TrainConfig& config,
                                const TrainLog& log = {});

/// All four schemes.
TrainedModel train_full(const Dataset& train, const TrainConfig& config, const TrainLog& log = {});

struct Metrics {
  double mae = 0.0;
  std::optional<double> r2;  // unset when some label dimension has zero variance
  std::optional<double> angular_deg;
  double spearman = 0.0;
};

/// MAE, R^2 and (for angular labels) mean angular error of predictions.
Metrics prediction_metrics(const Matrix& pred, const Matrix& target, LabelDistanceKind dist_kind);

/// Spearman rank correlation with average ranks for ties; 0 if either side is constant.
double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b);

/// Rank agreement of embedding L2 distances and label distances over a fixed
/// subsample of at most `max_pairs` pairs.
double embedding_label_spearman(const Matrix& embeddings, const Matrix& labels, LabelDistanceKind dist_kind,
                                int max_pairs = 500);

Metrics evaluate(const MLP& encoder, const LinearPredictor& predictor, const Dataset& dataset,
                 LabelDistanceKind dist_kind);

std::string metrics_json(const Metrics& metrics);

}  // namespace supcr
