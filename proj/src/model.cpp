#include "supcr/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace supcr {

MLP::MLP(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw DomainError("MLP needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols())
      throw DomainError("MLP: bias shape does not match layer " + std::to_string(l));
    if (l > 0 && layer.weight.rows() != layers_[l - 1].weight.cols())
      throw DomainError("MLP: width mismatch at layer " + std::to_string(l));
  }
}

MLP MLP::random(const std::vector<int>& widths, Rng& rng) {
  if (widths.size() < 2) throw DomainError("MLP needs at least input and output widths");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l] < 1 || widths[l + 1] < 1) throw DomainError("MLP widths must be positive");
    const double bound = std::sqrt(1.0 / widths[l]);
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Layer layer{Matrix(widths[l], widths[l + 1]), Matrix(1, widths[l + 1])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = uniform(rng);
    for (Eigen::Index c = 0; c < layer.bias.cols(); ++c) layer.bias(0, c) = uniform(rng);
    layers.push_back(std::move(layer));
  }
  return MLP(std::move(layers));
}

Matrix MLP::forward(const Matrix& inputs, ForwardCache* cache) const {
  if (inputs.cols() != input_dim()) throw DomainError("MLP: input width mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix x = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = x * layers_[l].weight;
    z.rowwise() += layers_[l].bias.row(0);
    if (cache) {
      cache->inputs.push_back(x);
      cache->pre.push_back(z);
    }
    x = (l + 1 < layers_.size()) ? Matrix(z.cwiseMax(0.0)) : z;
  }
  return x;
}

MlpGradients MLP::backward(const ForwardCache& cache, const Matrix& upstream) const {
  if (cache.inputs.size() != layers_.size()) throw DomainError("MLP: cache does not match network");
  if (upstream.cols() != output_dim() || upstream.rows() != cache.inputs.front().rows())
    throw DomainError("MLP: upstream gradient shape mismatch");
  MlpGradients out;
  out.params.resize(2 * layers_.size());
  Matrix delta = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    out.params[2 * l] = cache.inputs[l].transpose() * delta;
    out.params[2 * l + 1] = delta.colwise().sum();
    delta = delta * layers_[l].weight.transpose();
  }
  out.input_grad = std::move(delta);
  return out;
}

int MLP::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.rows()); }
int MLP::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.cols()); }

std::vector<int> MLP::widths() const {
  std::vector<int> w;
  if (layers_.empty()) return w;
  w.push_back(input_dim());
  for (const auto& layer : layers_) w.push_back(static_cast<int>(layer.weight.cols()));
  return w;
}

std::vector<Matrix*> MLP::parameters() {
  std::vector<Matrix*> p;
  for (auto& layer : layers_) {
    p.push_back(&layer.weight);
    p.push_back(&layer.bias);
  }
  return p;
}

std::vector<const Matrix*> MLP::parameters() const {
  std::vector<const Matrix*> p;
  for (const auto& layer : layers_) {
    p.push_back(&layer.weight);
    p.push_back(&layer.bias);
  }
  return p;
}

LinearPredictor LinearPredictor::random(int embed_dim, int label_dim, Rng& rng) {
  const MLP net = MLP::random({embed_dim, label_dim}, rng);
  return {net.layers()[0].weight, net.layers()[0].bias};
}

Matrix LinearPredictor::forward(const Matrix& embeddings) const {
  if (embeddings.cols() != weight.rows()) throw DomainError("predictor: embedding width mismatch");
  Matrix out = embeddings * weight;
  out.rowwise() += bias.row(0);
  return out;
}

MlpGradients LinearPredictor::backward(const Matrix& embeddings, const Matrix& upstream) const {
  return {{embeddings.transpose() * upstream, upstream.colwise().sum()}, upstream * weight.transpose()};
}

RegressionKind parse_regression_kind(std::string_view name) {
  if (name == "l1") return RegressionKind::L1;
  if (name == "mse") return RegressionKind::MSE;
  if (name == "huber") return RegressionKind::Huber;
  throw ConfigError("unknown regression loss '" + std::string(name) + "'");
}

std::string_view to_string(RegressionKind kind) {
  switch (kind) {
    case RegressionKind::L1: return "l1";
    case RegressionKind::MSE: return "mse";
    case RegressionKind::Huber: return "huber";
  }
  return "?";
}

RegressionResult regression_loss(const Matrix& pred, const Matrix& target, const RegressionLoss& loss) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DomainError("regression loss: shape mismatch");
  if (loss.kind == RegressionKind::Huber && !(loss.huber_beta > 0.0)) throw DomainError("huber beta must be > 0");
  const double count = static_cast<double>(pred.size());
  const Matrix e = pred - target;
  RegressionResult out;
  out.grad.resize(e.rows(), e.cols());
  double sum = 0.0;
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) {
      const double v = e(r, c);
      switch (loss.kind) {
        case RegressionKind::L1:
          sum += std::abs(v);
          out.grad(r, c) = (v > 0.0) - (v < 0.0);
          break;
        case RegressionKind::MSE:
          sum += v * v;
          out.grad(r, c) = 2.0 * v;
          break;
        case RegressionKind::Huber: {
          const double beta = loss.huber_beta;
          if (std::abs(v) <= beta) {
            sum += 0.5 * v * v;
            out.grad(r, c) = v;
          } else {
            sum += beta * (std::abs(v) - 0.5 * beta);
            out.grad(r, c) = beta * ((v > 0.0) - (v < 0.0));
          }
          break;
        }
      }
    }
  }
  out.value = sum / count;
  out.grad /= count;
  return out;
}

double cosine_lr(long step, const OptimizerConfig& config) {
  if (step >= config.total_steps) return config.lr_min;
  if (step <= 0) return config.lr_base;
  const double t = static_cast<double>(step) / static_cast<double>(config.total_steps);
  return config.lr_min + 0.5 * (config.lr_base - config.lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

void Sgd::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, double lr) {
  if (params.size() != grads.size()) throw DomainError("sgd: parameter/gradient count mismatch");
  if (momentum_.empty()) {
    for (const Matrix* p : params) momentum_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  if (momentum_.size() != params.size()) throw DomainError("sgd: parameter set changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& theta = *params[k];
    if (grads[k].rows() != theta.rows() || grads[k].cols() != theta.cols())
      throw DomainError("sgd: gradient shape mismatch");
    momentum_[k] = config_.momentum * momentum_[k] + grads[k];
    if (config_.weight_decay != 0.0) momentum_[k] += config_.weight_decay * theta;
    theta -= lr * momentum_[k];
  }
}

}  // namespace supcr
