#include "supcr/model_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace supcr {

namespace {

constexpr const char* kTextMagic = "supcr-model";
constexpr char kBinaryMagic[8] = {'S', 'U', 'P', 'C', 'R', 'M', 'B', '1'};
constexpr int kVersion = 1;

void write_matrix_text(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
    out << '\n';
  }
}

Matrix read_matrix_text(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (!(in >> m(r, c))) throw ConfigError("model file: truncated parameter block");
  return m;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ConfigError("model file: truncated binary data");
  return v;
}

void write_matrix_binary(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put(out, m(r, c));
}

Matrix read_matrix_binary(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get<double>(in);
  return m;
}

void check_shape(long rows, long cols) {
  if (rows < 1 || cols < 1 || rows > (1 << 20) || cols > (1 << 20)) throw ConfigError("model file: bad layer shape");
}

TrainedModel load_text(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kTextMagic || version != kVersion) throw ConfigError("model file: unsupported header");
  TrainedModel model;
  std::string tag, dist;
  in >> tag >> dist;
  if (tag != "label_distance") throw ConfigError("model file: expected label_distance");
  model.dist_kind = parse_label_distance_kind(dist);
  std::size_t layers = 0;
  in >> tag >> layers;
  if (tag != "encoder" || layers == 0) throw ConfigError("model file: expected encoder layer count");
  std::vector<Layer> enc;
  for (std::size_t l = 0; l < layers; ++l) {
    long rows = 0, cols = 0;
    in >> tag >> rows >> cols;
    if (tag != "layer") throw ConfigError("model file: expected layer");
    check_shape(rows, cols);
    Matrix w = read_matrix_text(in, rows, cols);
    Matrix b = read_matrix_text(in, 1, cols);
    enc.push_back({std::move(w), std::move(b)});
  }
  model.encoder = MLP(std::move(enc));
  long rows = 0, cols = 0;
  in >> tag >> rows >> cols;
  if (tag != "predictor") throw ConfigError("model file: expected predictor");
  check_shape(rows, cols);
  model.predictor.weight = read_matrix_text(in, rows, cols);
  model.predictor.bias = read_matrix_text(in, 1, cols);
  if (model.predictor.weight.rows() != model.encoder.output_dim())
    throw ConfigError("model file: predictor does not match encoder output");
  return model;
}

TrainedModel load_binary(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (std::memcmp(magic, kBinaryMagic, sizeof magic) != 0) throw ConfigError("model file: bad binary magic");
  TrainedModel model;
  model.dist_kind = get<std::int32_t>(in) == 0 ? LabelDistanceKind::L1 : LabelDistanceKind::Angular;
  const auto layers = get<std::int32_t>(in);
  if (layers <= 0) throw ConfigError("model file: bad encoder layer count");
  std::vector<Layer> enc;
  for (int l = 0; l < layers; ++l) {
    const long rows = get<std::int32_t>(in);
    const long cols = get<std::int32_t>(in);
    check_shape(rows, cols);
    Matrix w = read_matrix_binary(in, rows, cols);
    Matrix b = read_matrix_binary(in, 1, cols);
    enc.push_back({std::move(w), std::move(b)});
  }
  model.encoder = MLP(std::move(enc));
  const long rows = get<std::int32_t>(in);
  const long cols = get<std::int32_t>(in);
  check_shape(rows, cols);
  model.predictor.weight = read_matrix_binary(in, rows, cols);
  model.predictor.bias = read_matrix_binary(in, 1, cols);
  if (model.predictor.weight.rows() != model.encoder.output_dim())
    throw ConfigError("model file: predictor does not match encoder output");
  return model;
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path, ModelFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const auto& layers = model.encoder.layers();
  if (format == ModelFormat::Text) {
    out << kTextMagic << ' ' << kVersion << '\n';
    out << "label_distance " << to_string(model.dist_kind) << '\n';
    out << "encoder " << layers.size() << '\n';
    for (const auto& layer : layers) {
      out << "layer " << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
      write_matrix_text(out, layer.weight);
      write_matrix_text(out, layer.bias);
    }
    out << "predictor " << model.predictor.weight.rows() << ' ' << model.predictor.weight.cols() << '\n';
    write_matrix_text(out, model.predictor.weight);
    write_matrix_text(out, model.predictor.bias);
  } else {
    out.write(kBinaryMagic, sizeof kBinaryMagic);
    put<std::int32_t>(out, model.dist_kind == LabelDistanceKind::L1 ? 0 : 1);
    put<std::int32_t>(out, static_cast<std::int32_t>(layers.size()));
    for (const auto& layer : layers) {
      put<std::int32_t>(out, static_cast<std::int32_t>(layer.weight.rows()));
      put<std::int32_t>(out, static_cast<std::int32_t>(layer.weight.cols()));
      write_matrix_binary(out, layer.weight);
      write_matrix_binary(out, layer.bias);
    }
    put<std::int32_t>(out, static_cast<std::int32_t>(model.predictor.weight.rows()));
    put<std::int32_t>(out, static_cast<std::int32_t>(model.predictor.weight.cols()));
    write_matrix_binary(out, model.predictor.weight);
    write_matrix_binary(out, model.predictor.bias);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open model " + path);
  char first[8] = {};
  in.read(first, sizeof first);
  in.clear();
  in.seekg(0);
  if (std::memcmp(first, kBinaryMagic, sizeof first) == 0) return load_binary(in);
  return load_text(in);
}

}  // namespace supcr
