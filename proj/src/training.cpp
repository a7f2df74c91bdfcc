#include "supcr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace supcr {

namespace {

enum Stream : std::uint64_t {
  kEncoderInit = 11,
  kEncoderBatches = 12,
  kPredictorInit = 21,
  kPredictorBatches = 22,
  kJointBatches = 31,
  kFinetuneBatches = 32,
};

std::vector<Matrix> concat(std::vector<Matrix> a, std::vector<Matrix> b) {
  a.insert(a.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
  return a;
}

std::vector<Matrix*> concat(std::vector<Matrix*> a, const std::vector<Matrix*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Shuffled, full-size batches of at most N samples; a trailing remainder is
// dropped unless it is the only batch.
class BatchSchedule {
 public:
  BatchSchedule(int dataset_size, int batch_size) : order_(static_cast<std::size_t>(dataset_size)) {
    if (dataset_size < 2) throw BatchSizeError("training needs at least 2 samples");
    std::iota(order_.begin(), order_.end(), 0);
    batch_ = std::min(batch_size, dataset_size);
    per_epoch_ = dataset_size / batch_;
  }

  int steps_per_epoch() const { return per_epoch_; }

  void shuffle(Rng& rng) { std::shuffle(order_.begin(), order_.end(), rng); }

  std::span<const int> batch(int b) const {
    return std::span<const int>(order_).subspan(static_cast<std::size_t>(b * batch_), static_cast<std::size_t>(batch_));
  }

 private:
  std::vector<int> order_;
  int batch_ = 0;
  int per_epoch_ = 0;
};

void check_finite(double loss, long step, std::string_view phase) {
  if (!std::isfinite(loss))
    throw TrainingError(std::string(phase) + ": non-finite loss at step " + std::to_string(step), step);
}

struct LabelRange {
  double lo;
  double hi;
};

LabelRange first_dim_range(const Dataset& data) {
  const double lo = data.labels.col(0).minCoeff();
  double hi = data.labels.col(0).maxCoeff();
  if (!(hi > lo)) hi = lo + 1.0;
  return {lo, hi};
}

std::string fmt_loss(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

void log_epoch(const TrainLog& log, std::string_view phase, int epoch, int epochs, double loss) {
  if (!log) return;
  if (epoch == 0 || epoch + 1 == epochs || (epoch + 1) % 10 == 0)
    log(std::string(phase) + " epoch " + std::to_string(epoch + 1) + "/" + std::to_string(epochs) +
        " loss=" + fmt_loss(loss));
}

std::vector<int> encoder_widths(int d_in, const TrainConfig& config) {
  std::vector<int> widths{d_in};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(config.embed_dim);
  return widths;
}

// Regression (plus lambda * SupCR when lambda > 0) on encoder + predictor together.
void train_jointly(MLP& encoder, LinearPredictor& predictor, const Dataset& train, const TrainConfig& config,
                   int epochs, double lambda, Rng& rng, std::string_view phase, const TrainLog& log) {
  if (epochs <= 0) return;
  const Vector feature_std = train.feature_std();
  const std::span<const double> stds(feature_std.data(), static_cast<std::size_t>(feature_std.size()));
  BatchSchedule schedule(train.size(), config.batch_size);
  OptimizerConfig opt = config.predictor_opt;
  opt.total_steps = static_cast<long>(epochs) * schedule.steps_per_epoch();
  Sgd sgd(opt);

  long step = 0;
  try {
    for (int epoch = 0; epoch < epochs; ++epoch) {
      schedule.shuffle(rng);
      double epoch_loss = 0.0;
      for (int b = 0; b < schedule.steps_per_epoch(); ++b, ++step) {
        const TwoViewBatch batch = build_two_view_batch(train, schedule.batch(b), config.augmentation, stds, rng);
        ForwardCache cache;
        const Matrix z = encoder.forward(batch.inputs, &cache);
        const Matrix pred = predictor.forward(z);
        const RegressionResult reg = regression_loss(pred, batch.labels, config.regression);
        MlpGradients pg = predictor.backward(z, reg.grad);
        Matrix dz = pg.input_grad;
        double loss = reg.value;
        if (lambda > 0.0) {
          const LossOutput con =
              supcr_loss_grad(batch.labels, z, config.sim_kind, config.dist_kind, config.tau);
          loss += lambda * con.value;
          dz += lambda * *con.grad;
        }
        check_finite(loss, step, phase);
        MlpGradients eg = encoder.backward(cache, dz);
        sgd.step(concat(encoder.parameters(), predictor.parameters()), concat(std::move(eg.params), std::move(pg.params)),
                 cosine_lr(step, opt));
        epoch_loss += loss;
      }
      log_epoch(log, phase, epoch, epochs, epoch_loss / schedule.steps_per_epoch());
    }
  } catch (const NumericError& e) {
    throw TrainingError(std::string(phase) + ": " + e.what() + " at step " + std::to_string(step), step);
  }
}

}  // namespace

Scheme parse_scheme(std::string_view name) {
  if (name == "linear_probing") return Scheme::LinearProbing;
  if (name == "fine_tuning") return Scheme::FineTuning;
  if (name == "regularization") return Scheme::Regularization;
  if (name == "direct") return Scheme::Direct;
  throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

EncoderLoss parse_encoder_loss(std::string_view name) {
  if (name == "supcr") return EncoderLoss::SupCR;
  if (name == "supcon") return EncoderLoss::SupCon;
  if (name == "simclr") return EncoderLoss::SimCLR;
  throw ConfigError("unknown encoder loss '" + std::string(name) + "'");
}

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::LinearProbing: return "linear_probing";
    case Scheme::FineTuning: return "fine_tuning";
    case Scheme::Regularization: return "regularization";
    case Scheme::Direct: return "direct";
  }
  return "?";
}

std::string_view to_string(EncoderLoss loss) {
  switch (loss) {
    case EncoderLoss::SupCR: return "supcr";
    case EncoderLoss::SupCon: return "supcon";
    case EncoderLoss::SimCLR: return "simclr";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("train.tau must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
  if (epochs_encoder < 1 || epochs_predictor < 1) throw ConfigError("epochs must be >= 1");
  if (epochs_finetune < 0) throw ConfigError("train.epochs_finetune must be >= 0");
  if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (embed_dim < 1 || projection_dim < 0) throw ConfigError("model dims must be positive");
  for (int h : hidden)
    if (h < 1) throw ConfigError("model.hidden widths must be positive");
  if (num_bins < 2) throw ConfigError("train.num_bins must be >= 2");
  for (const OptimizerConfig* o : {&encoder_opt, &predictor_opt}) {
    if (!(o->lr_base > 0.0) || o->lr_min < 0.0 || o->lr_min > o->lr_base) throw ConfigError("invalid learning rate");
    if (!(o->momentum >= 0.0 && o->momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (o->weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  }
  if (regression.kind == RegressionKind::Huber && !(regression.huber_beta > 0.0))
    throw ConfigError("train.huber_beta must be > 0");
  augmentation.validate();
}

LossOutput contrastive_loss(EncoderLoss kind, const Matrix& labels, const Matrix& z, const TrainConfig& config,
                            double bin_lo, double bin_hi) {
  if (kind == EncoderLoss::SupCR) return supcr_loss_grad(labels, z, config.sim_kind, config.dist_kind, config.tau);
  // Class-based losses never read label distances.
  const PairwiseMatrices pm{similarity_matrix(z, config.sim_kind, config.tau), Matrix::Zero(z.rows(), z.rows()),
                            config.tau};
  const SimilarityGradient sg = kind == EncoderLoss::SupCon
                                    ? supcon_loss_sim_grad(pm, bin_labels(labels, config.num_bins, bin_lo, bin_hi))
                                    : simclr_loss_sim_grad(pm);
  return {sg.value, similarity_backward(z, sg.grad_sim, config.sim_kind, config.tau)};
}

EncoderResult train_encoder(const Dataset& train, const TrainConfig& config, const TrainLog& log) {
  config.validate();
  Rng init = derive_rng(config.seed, kEncoderInit);
  EncoderResult result;
  result.encoder = MLP::random(encoder_widths(train.d_in(), config), init);
  if (config.projection_dim > 0) result.head = make_projection_head(config.embed_dim, config.projection_dim, init);

  const Vector feature_std = train.feature_std();
  const std::span<const double> stds(feature_std.data(), static_cast<std::size_t>(feature_std.size()));
  const LabelRange range = first_dim_range(train);
  BatchSchedule schedule(train.size(), config.batch_size);
  OptimizerConfig opt = config.encoder_opt;
  opt.total_steps = static_cast<long>(config.epochs_encoder) * schedule.steps_per_epoch();
  Sgd sgd(opt);
  Rng rng = derive_rng(config.seed, kEncoderBatches);

  long step = 0;
  try {
    for (int epoch = 0; epoch < config.epochs_encoder; ++epoch) {
      schedule.shuffle(rng);
      double epoch_loss = 0.0;
      for (int b = 0; b < schedule.steps_per_epoch(); ++b, ++step) {
        const TwoViewBatch batch = build_two_view_batch(train, schedule.batch(b), config.augmentation, stds, rng);
        ForwardCache cache;
        const Matrix v = result.encoder.forward(batch.inputs, &cache);
        ForwardCache head_cache;
        const Matrix z = result.head ? result.head->forward(v, &head_cache) : v;
        const LossOutput out = contrastive_loss(config.encoder_loss, batch.labels, z, config, range.lo, range.hi);
        check_finite(out.value, step, "encoder");

        std::vector<Matrix*> params = result.encoder.parameters();
        std::vector<Matrix> grads;
        if (result.head) {
          MlpGradients hg = result.head->backward(head_cache, *out.grad);
          MlpGradients eg = result.encoder.backward(cache, hg.input_grad);
          params = concat(std::move(params), result.head->parameters());
          grads = concat(std::move(eg.params), std::move(hg.params));
        } else {
          grads = result.encoder.backward(cache, *out.grad).params;
        }
        sgd.step(params, grads, cosine_lr(step, opt));
        epoch_loss += out.value;
      }
      result.epoch_loss.push_back(epoch_loss / schedule.steps_per_epoch());
      log_epoch(log, "encoder", epoch, config.epochs_encoder, result.epoch_loss.back());
    }
  } catch (const NumericError& e) {
    throw TrainingError(std::string("encoder") + ": " + e.what() + " at step " + std::to_string(step), step);
  }
  return result;
}

LinearPredictor train_predictor(const MLP& encoder, const Dataset& train, const TrainConfig& config,
                                const TrainLog& log) {
  config.validate();
  Rng init = derive_rng(config.seed, kPredictorInit);
  LinearPredictor predictor = LinearPredictor::random(encoder.output_dim(), train.d_t(), init);

  const Vector feature_std = train.feature_std();
  const std::span<const double> stds(feature_std.data(), static_cast<std::size_t>(feature_std.size()));
  BatchSchedule schedule(train.size(), config.batch_size);
  OptimizerConfig opt = config.predictor_opt;
  opt.total_steps = static_cast<long>(config.epochs_predictor) * schedule.steps_per_epoch();
  Sgd sgd(opt);
  Rng rng = derive_rng(config.seed, kPredictorBatches);

  long step = 0;
  try {
    for (int epoch = 0; epoch < config.epochs_predictor; ++epoch) {
      schedule.shuffle(rng);
      double epoch_loss = 0.0;
      for (int b = 0; b < schedule.steps_per_epoch(); ++b, ++step) {
        const TwoViewBatch batch = build_two_view_batch(train, schedule.batch(b), config.augmentation, stds, rng);
        const Matrix z = encoder.forward(batch.inputs);
        const RegressionResult reg = regression_loss(predictor.forward(z), batch.labels, config.regression);
        check_finite(reg.value, step, "predictor");
        sgd.step(predictor.parameters(), predictor.backward(z, reg.grad).params, cosine_lr(step, opt));
        epoch_loss += reg.value;
      }
      log_epoch(log, "predictor", epoch, config.epochs_predictor, epoch_loss / schedule.steps_per_epoch());
    }
  } catch (const NumericError& e) {
    throw TrainingError(std::string("predictor") + ": " + e.what() + " at step " + std::to_string(step), step);
  }
  return predictor;
}

TrainedModel train_full(const Dataset& train, const TrainConfig& config, const TrainLog& log) {
  config.validate();
  TrainedModel model;
  model.dist_kind = config.dist_kind;
  switch (config.scheme) {
    case Scheme::LinearProbing: {
      EncoderResult enc = train_encoder(train, config, log);
      model.encoder = std::move(enc.encoder);
      model.encoder_loss = std::move(enc.epoch_loss);
      model.predictor = train_predictor(model.encoder, train, config, log);
      break;
    }
    case Scheme::FineTuning: {
      EncoderResult enc = train_encoder(train, config, log);
      model.encoder = std::move(enc.encoder);
      model.encoder_loss = std::move(enc.epoch_loss);
      Rng init = derive_rng(config.seed, kPredictorInit);
      model.predictor = LinearPredictor::random(model.encoder.output_dim(), train.d_t(), init);
      Rng rng = derive_rng(config.seed, kFinetuneBatches);
      train_jointly(model.encoder, model.predictor, train, config, config.epochs_finetune, 0.0, rng, "finetune", log);
      break;
    }
    case Scheme::Regularization:
    case Scheme::Direct: {
      Rng init = derive_rng(config.seed, kEncoderInit);
      model.encoder = MLP::random(encoder_widths(train.d_in(), config), init);
      Rng pinit = derive_rng(config.seed, kPredictorInit);
      model.predictor = LinearPredictor::random(config.embed_dim, train.d_t(), pinit);
      Rng rng = derive_rng(config.seed, kJointBatches);
      const double lambda = config.scheme == Scheme::Direct ? 0.0 : config.lambda;
      train_jointly(model.encoder, model.predictor, train, config, config.epochs_encoder, lambda, rng,
                    config.scheme == Scheme::Direct ? "direct" : "regularization", log);
      break;
    }
  }
  return model;
}

Metrics prediction_metrics(const Matrix& pred, const Matrix& target, LabelDistanceKind dist_kind) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw DomainError("metrics: shape mismatch");
  if (pred.rows() == 0) throw DomainError("metrics: empty dataset");
  Metrics m;
  m.mae = (pred - target).cwiseAbs().mean();

  double r2_sum = 0.0;
  bool defined = true;
  for (Eigen::Index c = 0; c < target.cols(); ++c) {
    const double mean = target.col(c).mean();
    const double ss_tot = (target.col(c).array() - mean).square().sum();
    const double ss_res = (target.col(c) - pred.col(c)).squaredNorm();
    if (ss_tot == 0.0) {
      defined = false;
      break;
    }
    r2_sum += 1.0 - ss_res / ss_tot;
  }
  if (defined) m.r2 = r2_sum / static_cast<double>(target.cols());

  if (dist_kind == LabelDistanceKind::Angular) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < target.rows(); ++r)
      total += label_distance(pred.row(r).transpose(), target.row(r).transpose(), LabelDistanceKind::Angular);
    m.angular_deg = total / static_cast<double>(target.rows());
  }
  return m;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t p = 0; p < idx.size();) {
    std::size_t q = p;
    while (q + 1 < idx.size() && v[idx[q + 1]] == v[idx[p]]) ++q;
    const double r = 0.5 * static_cast<double>(p + q) + 1.0;
    for (std::size_t t = p; t <= q; ++t) ranks[idx[t]] = r;
    p = q + 1;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DomainError("spearman: length mismatch");
  if (a.size() < 2) return 0.0;
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0;
  double va = 0.0;
  double vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

double embedding_label_spearman(const Matrix& embeddings, const Matrix& labels, LabelDistanceKind dist_kind,
                                int max_pairs) {
  const auto n = embeddings.rows();
  if (n < 2) return 0.0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  const long all_pairs = static_cast<long>(n) * (n - 1) / 2;
  if (all_pairs <= max_pairs) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  } else {
    // Fixed stream: the subsample depends only on the dataset size.
    Rng rng = derive_rng(0x5be4a2, static_cast<std::uint64_t>(n));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    while (static_cast<int>(pairs.size()) < max_pairs) {
      const Eigen::Index i = pick(rng);
      const Eigen::Index j = pick(rng);
      if (i != j) pairs.emplace_back(i, j);
    }
  }
  std::vector<double> emb_dist;
  std::vector<double> label_dist;
  for (const auto& [i, j] : pairs) {
    emb_dist.push_back((embeddings.row(i) - embeddings.row(j)).norm());
    label_dist.push_back(label_distance(labels.row(i).transpose(), labels.row(j).transpose(), dist_kind));
  }
  return spearman_correlation(emb_dist, label_dist);
}

Metrics evaluate(const MLP& encoder, const LinearPredictor& predictor, const Dataset& dataset,
                 LabelDistanceKind dist_kind) {
  const Matrix z = encoder.forward(dataset.features);
  Metrics m = prediction_metrics(predictor.forward(z), dataset.labels, dist_kind);
  m.spearman = embedding_label_spearman(z, dataset.labels, dist_kind);
  return m;
}

std::string metrics_json(const Metrics& m) {
  auto num = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("null"); };
  return "{\"mae\": " + format_double(m.mae) + ", \"r2\": " + num(m.r2) + ", \"angular_deg\": " +
         num(m.angular_deg) + ", \"spearman\": " + format_double(m.spearman) + "}";
}

}  // namespace supcr
