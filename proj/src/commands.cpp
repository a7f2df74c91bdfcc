#include "supcr/commands.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "supcr/config.hpp"
#include "supcr/model_io.hpp"
#include "supcr/theory.hpp"
#include "supcr/verify.hpp"

namespace supcr {

namespace {

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::uint64_t resolve_seed(ConfigFile& cfg, const std::string& key, std::uint64_t fallback) {
  const std::uint64_t from_config = cfg.get_u64(key, fallback);
  return seed_from_env().value_or(from_config);
}

ConfigFile load_or_empty(const std::optional<std::string>& path) {
  return path ? ConfigFile::load(*path) : ConfigFile::from_string("", "<defaults>");
}

int finish_verification(const VerifyReport& report, const std::string& title, const std::optional<std::string>& out_path,
                        CommandIO io) {
  const std::string text = report.to_text();
  if (out_path) {
    write_text_file(*out_path, text);
  } else {
    io.out << text;
  }
  for (const auto& c : report.cases) io.out << title << ' ' << c.name << ": " << (c.passed ? "pass" : "FAIL") << '\n';
  if (const SuiteCase* failure = report.first_failure()) {
    io.err << title << " failed in case '" << failure->name << "': " << failure->detail << '\n';
    return kExitVerification;
  }
  return kExitOk;
}

}  // namespace

int run_guarded(const std::function<int()>& body, CommandIO io) {
  try {
    return body();
  } catch (const ConfigError& e) {
    io.err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TrainingError& e) {
    io.err << "training error (step " << e.step() << "): " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_gen_data(const std::string& config_path, const std::optional<std::string>& out_path, CommandIO io) {
  ConfigFile cfg = ConfigFile::load(config_path);
  const GeneratorSpec spec = read_generator_spec(cfg);
  const std::uint64_t seed = resolve_seed(cfg, "generator.seed", 42);
  const std::string path = out_path.value_or(cfg.get_string("output.data", "data.csv"));
  cfg.reject_unknown();

  const Dataset data = generate_synthetic_dataset(spec, seed);
  write_dataset_csv(data, path);
  io.out << "wrote " << data.size() << " rows to " << path << '\n';
  return kExitOk;
}

int cmd_train(const std::string& config_path, CommandIO io) {
  ConfigFile cfg = ConfigFile::load(config_path);
  const auto data_path = cfg.get_optional("data.path");
  if (!data_path) throw ConfigError(config_path + ": data.path is required");
  const std::vector<double> split = cfg.get_doubles("data.split", {0.8, 0.1, 0.1});
  if (split.size() != 3) throw ConfigError(config_path + ": data.split needs three fractions");
  TrainConfig config = read_train_config(cfg);
  config.seed = seed_from_env().value_or(config.seed);
  const std::string model_path = cfg.get_string("output.model", "model.txt");
  const std::string metrics_path = cfg.get_string("output.metrics", "metrics.json");
  const std::string format = cfg.get_string("output.format", "text");
  if (format != "text" && format != "binary") throw ConfigError("output.format must be text or binary");
  cfg.reject_unknown();

  const Dataset data = read_dataset_csv(*data_path);
  const DatasetSplit parts = split_dataset(data, {split[0], split[1], split[2]}, config.seed);
  io.out << "scheme=" << to_string(config.scheme) << " encoder_loss=" << to_string(config.encoder_loss)
         << " regression=" << to_string(config.regression.kind) << " train=" << parts.train.size()
         << " test=" << parts.test.size() << '\n';
  const TrainedModel model = train_full(parts.train, config, [&](const std::string& line) { io.out << line << '\n'; });
  const Metrics metrics = evaluate(model.encoder, model.predictor, parts.test, config.dist_kind);

  save_model(model, model_path, format == "text" ? ModelFormat::Text : ModelFormat::Binary);
  write_text_file(metrics_path, metrics_json(metrics) + "\n");
  io.out << "test metrics " << metrics_json(metrics) << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& data_path, const std::optional<std::string>& out_path,
             CommandIO io) {
  const TrainedModel model = load_model(model_path);
  const Dataset data = read_dataset_csv(data_path);
  if (data.d_in() != model.encoder.input_dim() || data.d_t() != model.predictor.weight.cols())
    throw ConfigError("dataset dimensions do not match the model");
  const std::string json = metrics_json(evaluate(model.encoder, model.predictor, data, model.dist_kind)) + "\n";
  if (out_path) {
    write_text_file(*out_path, json);
  } else {
    io.out << json;
  }
  return kExitOk;
}

int cmd_verify_theory(const std::optional<std::string>& config_path, const std::optional<std::string>& out_path,
                      CommandIO io) {
  ConfigFile cfg = load_or_empty(config_path);
  TheorySuiteOptions o;
  o.seed = resolve_seed(cfg, "verify.seed", o.seed);
  o.bound_batches = cfg.get_int("verify.bound_batches", o.bound_batches);
  o.max_batch = cfg.get_int("verify.max_batch", o.max_batch);
  o.equivalence_batches = cfg.get_int("verify.equivalence_batches", o.equivalence_batches);
  o.tight_batches = cfg.get_int("verify.tight_batches", o.tight_batches);
  o.epsilons = cfg.get_doubles("verify.epsilons", o.epsilons);
  o.deltas = cfg.get_doubles("verify.deltas", o.deltas);
  o.order_batches = cfg.get_int("verify.order_batches", o.order_batches);
  o.order_max_batch = cfg.get_int("verify.order_max_batch", o.order_max_batch);
  o.optimize_steps = cfg.get_int("verify.optimize_steps", o.optimize_steps);
  const std::string fault = cfg.get_string("verify.fault", "none");
  if (fault != "none" && fault != "strict_mask") throw ConfigError("verify.fault must be none or strict_mask");
  o.fault_strict_mask = fault == "strict_mask";
  const std::optional<std::string> report_path = out_path ? out_path : cfg.get_optional("output.report");
  cfg.reject_unknown();
  if (o.max_batch < 4 || o.max_batch % 2 || o.order_max_batch < 4 || o.order_max_batch % 2)
    throw ConfigError("verify batch sizes must be even and >= 4");
  for (double d : o.deltas)
    if (!(d > 0.0 && d < 1.0)) throw ConfigError("verify.deltas must lie in (0, 1)");
  for (double e : o.epsilons)
    if (!(e > 0.0)) throw ConfigError("verify.epsilons must be positive");

  return finish_verification(run_theory_suite(o), "verify-theory", report_path, io);
}

int cmd_grad_check(const std::optional<std::string>& config_path, const std::optional<std::string>& out_path,
                   CommandIO io) {
  ConfigFile cfg = load_or_empty(config_path);
  GradSuiteOptions o;
  o.seed = resolve_seed(cfg, "grad.seed", o.seed);
  o.configs = cfg.get_int("grad.configs", o.configs);
  o.max_batch = cfg.get_int("grad.max_batch", o.max_batch);
  o.max_dim = cfg.get_int("grad.max_dim", o.max_dim);
  o.mlp_configs = cfg.get_int("grad.mlp_configs", o.mlp_configs);
  o.step = cfg.get_double("grad.step", o.step);
  o.threshold = cfg.get_double("grad.threshold", o.threshold);
  const std::string fault = cfg.get_string("grad.fault", "none");
  if (fault != "none" && fault != "drop_transpose") throw ConfigError("grad.fault must be none or drop_transpose");
  o.fault_drop_transpose = fault == "drop_transpose";
  const std::optional<std::string> report_path = out_path ? out_path : cfg.get_optional("output.report");
  cfg.reject_unknown();
  if (o.max_batch < 2 || o.max_dim < 1 || !(o.step > 0.0)) throw ConfigError("invalid grad-check settings");

  return finish_verification(run_grad_suite(o), "grad-check", report_path, io);
}

int cmd_export_embeddings(const std::string& model_path, const std::string& data_path, const std::string& out_path,
                          CommandIO io) {
  const TrainedModel model = load_model(model_path);
  const Dataset data = read_dataset_csv(data_path);
  if (data.d_in() != model.encoder.input_dim()) throw ConfigError("dataset feature width does not match the model");
  const Matrix emb = model.encoder.forward(data.features);

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << "id";
  for (Eigen::Index c = 0; c < emb.cols(); ++c) out << ",e" << c;
  for (int c = 0; c < data.d_t(); ++c) out << ",y" << c;
  out << '\n';
  for (int r = 0; r < data.size(); ++r) {
    out << r;
    for (Eigen::Index c = 0; c < emb.cols(); ++c) out << ',' << format_double(emb(r, c));
    for (int c = 0; c < data.d_t(); ++c) out << ',' << format_double(data.labels(r, c));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + out_path);
  io.out << "wrote " << data.size() << " embeddings to " << out_path << '\n';
  return kExitOk;
}

int cmd_bench(const std::vector<int>& sizes, int repeats, CommandIO io) {
  using Clock = std::chrono::steady_clock;
  if (repeats < 1) throw ConfigError("bench: repeats must be >= 1");
  io.out << std::setw(6) << "2N" << std::setw(14) << "naive_ms" << std::setw(14) << "fast_ms" << std::setw(12)
         << "speedup" << std::setw(14) << "abs_diff" << '\n';
  Rng rng = derive_rng(7, 400);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 9);
  for (int n : sizes) {
    if (n < 2 || n % 2) throw ConfigError("bench: sizes must be even and >= 2");
    Matrix labels(n, 1);
    for (int r = 0; r < n; r += 2) labels(r, 0) = labels(r + 1, 0) = level(rng);
    Matrix emb(n, 8);
    for (Eigen::Index r = 0; r < emb.rows(); ++r)
      for (Eigen::Index c = 0; c < emb.cols(); ++c) emb(r, c) = normal(rng);
    const PairwiseMatrices pm = pairwise_matrices(labels, emb, SimilarityKind::NegL2, LabelDistanceKind::L1, 2.0);

    double naive = 0.0;
    double fast = 0.0;
    const auto t0 = Clock::now();
    for (int k = 0; k < repeats; ++k) naive += supcr_loss_naive(pm);
    const auto t1 = Clock::now();
    for (int k = 0; k < repeats; ++k) fast += supcr_loss_fast(pm);
    const auto t2 = Clock::now();
    const double naive_ms = std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
    const double fast_ms = std::chrono::duration<double, std::milli>(t2 - t1).count() / repeats;
    io.out << std::setw(6) << n << std::setw(14) << std::setprecision(4) << naive_ms << std::setw(14) << fast_ms
           << std::setw(12) << naive_ms / std::max(fast_ms, 1e-9) << std::setw(14)
           << std::abs(naive - fast) / repeats << '\n';
  }
  return kExitOk;
}

}  // namespace supcr
