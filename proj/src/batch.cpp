#include "supcr/batch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace supcr {

namespace {

constexpr double kPitchLo = -40.0;
constexpr double kPitchHi = 10.0;
constexpr double kYawLo = -45.0;
constexpr double kYawHi = 45.0;

const char* kind_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::Linear: return "linear";
    case GeneratorKind::Norm: return "norm";
    case GeneratorKind::Angular: return "angular";
  }
  return "?";
}

void validate(const GeneratorSpec& spec) {
  if (spec.d_in < 1) throw ConfigError("generator: d_in must be >= 1");
  if (spec.d_t < 1) throw ConfigError("generator: d_t must be >= 1");
  if (spec.size < 4) throw ConfigError("generator: size must be >= 4");
  if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise)) throw ConfigError("generator: noise must be >= 0");
  if (spec.kind == GeneratorKind::Norm && spec.d_t != 1) throw ConfigError("generator: norm requires d_t = 1");
  if (spec.kind == GeneratorKind::Angular && spec.d_t != 2) throw ConfigError("generator: angular requires d_t = 2");
  if (spec.weight && (spec.weight->rows() != spec.d_t || spec.weight->cols() != spec.d_in))
    throw ConfigError("generator: weight must be d_t x d_in");
  if (spec.bias && spec.bias->size() != spec.d_t) throw ConfigError("generator: bias must have d_t entries");
}

}  // namespace

Dataset Dataset::subset(std::span<const int> indices) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.resize(static_cast<Eigen::Index>(indices.size()), labels.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(indices[r]);
    out.labels.row(static_cast<Eigen::Index>(r)) = labels.row(indices[r]);
  }
  out.metadata = metadata;
  return out;
}

Vector Dataset::feature_std() const {
  const RowVector mean = features.colwise().mean();
  const Matrix centered = features.rowwise() - mean;
  Vector out = (centered.array().square().colwise().sum() / static_cast<double>(features.rows())).sqrt();
  return out;
}

SyntheticGenerator::SyntheticGenerator(const GeneratorSpec& spec, std::uint64_t seed) : spec_(spec) {
  validate(spec);
  Rng rng = derive_rng(seed, 0x5eed0001);
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (spec.kind) {
    case GeneratorKind::Linear:
      if (spec.weight) {
        weight_ = *spec.weight;
      } else {
        weight_.resize(spec.d_t, spec.d_in);
        for (Eigen::Index r = 0; r < weight_.rows(); ++r)
          for (Eigen::Index c = 0; c < weight_.cols(); ++c) weight_(r, c) = normal(rng);
      }
      if (spec.bias) {
        bias_ = *spec.bias;
      } else {
        bias_.resize(spec.d_t);
        for (Eigen::Index r = 0; r < bias_.size(); ++r) bias_(r) = normal(rng);
      }
      break;
    case GeneratorKind::Angular: {
      // Unit-norm projections so tanh arguments stay O(1) for standard normal inputs.
      weight_.resize(2, spec.d_in);
      for (Eigen::Index r = 0; r < 2; ++r) {
        for (Eigen::Index c = 0; c < weight_.cols(); ++c) weight_(r, c) = normal(rng);
        weight_.row(r).normalize();
      }
      break;
    }
    case GeneratorKind::Norm:
      break;
  }
}

Vector SyntheticGenerator::noiseless_label(const Vector& x) const {
  if (x.size() != spec_.d_in) throw DomainError("generator: feature dimension mismatch");
  switch (spec_.kind) {
    case GeneratorKind::Linear:
      return weight_ * x + bias_;
    case GeneratorKind::Norm: {
      Vector y(1);
      y(0) = x.norm();
      return y;
    }
    case GeneratorKind::Angular: {
      const Vector z = weight_ * x;
      Vector y(2);
      const double pitch_mid = 0.5 * (kPitchLo + kPitchHi);
      const double pitch_half = 0.5 * (kPitchHi - kPitchLo);
      // 0.9 keeps noiseless labels inside the range so noise is rarely clipped.
      y(0) = pitch_mid + 0.9 * pitch_half * std::tanh(z(0));
      y(1) = 0.9 * kYawHi * std::tanh(z(1));
      return y;
    }
  }
  return {};
}

Dataset generate_synthetic_dataset(const GeneratorSpec& spec, std::uint64_t seed) {
  const SyntheticGenerator generator(spec, seed);
  Rng rng = derive_rng(seed, 0x5eed0002);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset out;
  out.features.resize(spec.size, spec.d_in);
  out.labels.resize(spec.size, spec.d_t);
  for (int n = 0; n < spec.size; ++n) {
    Vector x(spec.d_in);
    for (int c = 0; c < spec.d_in; ++c) x(c) = normal(rng);
    Vector y = generator.noiseless_label(x);
    for (int c = 0; c < spec.d_t; ++c) y(c) += spec.noise * normal(rng);
    if (spec.kind == GeneratorKind::Angular) {
      y(0) = std::clamp(y(0), kPitchLo, kPitchHi);
      y(1) = std::clamp(y(1), kYawLo, kYawHi);
    }
    out.features.row(n) = x.transpose();
    out.labels.row(n) = y.transpose();
  }
  std::ostringstream meta;
  meta << "kind=" << kind_name(spec.kind) << " d_in=" << spec.d_in << " d_t=" << spec.d_t
       << " noise=" << format_double(spec.noise) << " size=" << spec.size << " seed=" << seed;
  out.metadata = meta.str();
  return out;
}

void AugmentationSpec::validate() const {
  if (!(gaussian_sigma >= 0.0)) throw ConfigError("augment: gaussian_sigma must be >= 0");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) throw ConfigError("augment: dropout_prob must be in [0, 1)");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) throw ConfigError("augment: scale range must satisfy 0 < a <= b");
}

Vector augment(const Sample& sample, const AugmentationSpec& spec, std::span<const double> feature_std,
               Rng& rng) {
  const auto d = sample.features.size();
  if (!feature_std.empty() && static_cast<Eigen::Index>(feature_std.size()) != d)
    throw DomainError("augment: feature_std dimension mismatch");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Vector out = sample.features;
  for (Eigen::Index c = 0; c < d; ++c) {
    const double std_c = feature_std.empty() ? 1.0 : feature_std[static_cast<std::size_t>(c)];
    out(c) += spec.gaussian_sigma * std_c * normal(rng);
  }
  for (Eigen::Index c = 0; c < d; ++c) {
    if (unit(rng) < spec.dropout_prob) out(c) = 0.0;
  }
  const double u = unit(rng);
  const double scale = spec.scale_lo == spec.scale_hi ? spec.scale_lo : spec.scale_lo + (spec.scale_hi - spec.scale_lo) * u;
  if (scale != 1.0) out *= scale;
  return out;
}

Vector augment(const Sample& sample, const AugmentationSpec& spec, Rng& rng) {
  return augment(sample, spec, std::span<const double>{}, rng);
}

TwoViewBatch build_two_view_batch(const Dataset& dataset, std::span<const int> indices,
                                  const AugmentationSpec& spec, std::span<const double> feature_std,
                                  Rng& rng) {
  if (indices.size() < 2) throw BatchSizeError("two-view batch needs N >= 2 samples");
  spec.validate();
  const auto n = static_cast<Eigen::Index>(indices.size());
  TwoViewBatch batch;
  batch.inputs.resize(2 * n, dataset.d_in());
  batch.labels.resize(2 * n, dataset.d_t());
  batch.source_indices.reserve(static_cast<std::size_t>(2 * n));
  for (Eigen::Index k = 0; k < n; ++k) {
    const int idx = indices[static_cast<std::size_t>(k)];
    if (idx < 0 || idx >= dataset.size()) throw DomainError("two-view batch: sample index out of range");
    const Sample s = dataset.sample(idx);
    batch.inputs.row(2 * k) = augment(s, spec, feature_std, rng).transpose();
    batch.inputs.row(2 * k + 1) = augment(s, spec, feature_std, rng).transpose();
    batch.labels.row(2 * k) = dataset.labels.row(idx);
    batch.labels.row(2 * k + 1) = dataset.labels.row(idx);
    batch.source_indices.push_back(idx);
    batch.source_indices.push_back(idx);
  }
  return batch;
}

TwoViewBatch build_two_view_batch(const Dataset& dataset, std::span<const int> indices,
                                  const AugmentationSpec& spec, Rng& rng) {
  return build_two_view_batch(dataset, indices, spec, std::span<const double>{}, rng);
}

DatasetSplit split_dataset(const Dataset& dataset, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split: fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");

  const int n = dataset.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng(seed, 0x5eed0003);
  std::shuffle(order.begin(), order.end(), rng);

  const int n_train = static_cast<int>(std::lround(fractions[0] * n));
  const int n_val = static_cast<int>(std::lround(fractions[1] * n));
  const int n_test = n - n_train - n_val;
  if (n_train <= 0 || n_val <= 0 || n_test <= 0) throw ConfigError("split: a split would be empty");

  const std::span<const int> all(order);
  return {dataset.subset(all.subspan(0, static_cast<std::size_t>(n_train))),
          dataset.subset(all.subspan(static_cast<std::size_t>(n_train), static_cast<std::size_t>(n_val))),
          dataset.subset(all.subspan(static_cast<std::size_t>(n_train + n_val)))};
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_dataset_csv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (int c = 0; c < dataset.d_in(); ++c) out << (c ? "," : "") << 'f' << c;
  for (int c = 0; c < dataset.d_t(); ++c) out << ",y" << c;
  out << '\n';
  for (int r = 0; r < dataset.size(); ++r) {
    for (int c = 0; c < dataset.d_in(); ++c) out << (c ? "," : "") << format_double(dataset.features(r, c));
    for (int c = 0; c < dataset.d_t(); ++c) out << ',' << format_double(dataset.labels(r, c));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");

  int d_in = 0;
  int d_t = 0;
  {
    std::stringstream header(line);
    std::string col;
    while (std::getline(header, col, ',')) {
      if (!col.empty() && col.back() == '\r') col.pop_back();
      const auto expect_f = "f" + std::to_string(d_in);
      const auto expect_y = "y" + std::to_string(d_t);
      if (d_t == 0 && col == expect_f) {
        ++d_in;
      } else if (col == expect_y) {
        ++d_t;
      } else {
        throw ConfigError(path + ": unexpected header column '" + col + "'");
      }
    }
  }
  if (d_in == 0 || d_t == 0) throw ConfigError(path + ": header needs f* and y* columns");

  std::vector<double> values;
  int rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
      if (!std::isfinite(v)) throw ConfigError(path + ":" + std::to_string(line_no) + ": non-finite value");
      values.push_back(v);
      ++cols;
    }
    if (cols != d_in + d_t) throw ConfigError(path + ":" + std::to_string(line_no) + ": wrong column count");
    ++rows;
  }
  if (rows == 0) throw ConfigError(path + ": no samples");

  Dataset out;
  out.features.resize(rows, d_in);
  out.labels.resize(rows, d_t);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < d_in; ++c) out.features(r, c) = values[static_cast<std::size_t>(r * (d_in + d_t) + c)];
    for (int c = 0; c < d_t; ++c) out.labels(r, c) = values[static_cast<std::size_t>(r * (d_in + d_t) + d_in + c)];
  }
  out.metadata = "csv=" + path;
  return out;
}

}  // namespace supcr
