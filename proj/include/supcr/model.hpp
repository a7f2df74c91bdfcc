#pragma once

#include <string_view>
#include <vector>

#include "supcr/types.hpp"

namespace supcr {

/// Affine layer y = x W + b with x as a row; `weight` is fan_in x fan_out and
/// `bias` is 1 x fan_out.
struct Layer {
  Matrix weight;
  Matrix bias;
};

struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
};

/// Parameter gradients in `parameters()` order plus dL/dinputs.
struct MlpGradients {
  std::vector<Matrix> params;
  Matrix input_grad;
};

/// Feedforward net, ReLU between layers and identity on the output.
class MLP {
 public:
  MLP() = default;
  explicit MLP(std::vector<Layer> layers);
  /// Weights and biases uniform in +-sqrt(1/fan_in).
  static MLP random(const std::vector<int>& widths, Rng& rng);

  Matrix forward(const Matrix& inputs, ForwardCache* cache = nullptr) const;
  MlpGradients backward(const ForwardCache& cache, const Matrix& upstream) const;

  int input_dim() const;
  int output_dim() const;
  std::vector<int> widths() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

 private:
  std::vector<Layer> layers_;
};

/// The output-only encoder head used during contrastive training: d_e -> d_e -> d_p.
inline MLP make_projection_head(int embed_dim, int proj_dim, Rng& rng) {
  return MLP::random({embed_dim, embed_dim, proj_dim}, rng);
}

struct LinearPredictor {
  Matrix weight;  // d_e x d_t
  Matrix bias;    // 1 x d_t

  static LinearPredictor random(int embed_dim, int label_dim, Rng& rng);
  Matrix forward(const Matrix& embeddings) const;
  /// Parameter gradients (weight, bias) and dL/dembeddings.
  MlpGradients backward(const Matrix& embeddings, const Matrix& upstream) const;
  std::vector<Matrix*> parameters() { return {&weight, &bias}; }
};

enum class RegressionKind { L1, MSE, Huber };

RegressionKind parse_regression_kind(std::string_view name);
std::string_view to_string(RegressionKind kind);

struct RegressionLoss {
  RegressionKind kind = RegressionKind::L1;
  double huber_beta = 1.0;
};

struct RegressionResult {
  double value = 0.0;
  Matrix grad;  // d value / d pred
};

/// Mean over every element of pred - target.
RegressionResult regression_loss(const Matrix& pred, const Matrix& target, const RegressionLoss& loss);

struct OptimizerConfig {
  double lr_base = 0.05;
  double lr_min = 0.0;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  long total_steps = 1;
};

double cosine_lr(long step, const OptimizerConfig& config);

/// SGD with heavy-ball momentum; weight decay enters the momentum buffer:
/// m <- mu m + g + wd theta, theta <- theta - lr m.
class Sgd {
 public:
  explicit Sgd(OptimizerConfig config) : config_(config) {}

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, double lr);
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<Matrix> momentum_;
};

}  // namespace supcr
