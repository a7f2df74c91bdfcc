#include "supcr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace supcr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in, const std::string& source) {
  ConfigFile cfg;
  cfg.source_ = source;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'section.key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key.find('.') == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": key must look like section.key");
    if (cfg.entries_.count(key))
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    cfg.entries_[key] = {value, line_no};
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse(in, path);
}

ConfigFile ConfigFile::from_string(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  return parse(in, source);
}

void ConfigFile::set(const std::string& key, const std::string& value) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    entries_[key] = {value, 0};
  } else {
    it->second.value = value;
  }
}

std::string ConfigFile::where(const std::string& key) const {
  const auto it = entries_.find(key);
  const int line = it == entries_.end() ? 0 : it->second.line;
  return line > 0 ? source_ + ":" + std::to_string(line) : source_;
}

std::optional<std::string> ConfigFile::get_optional(const std::string& key) {
  used_.insert(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.value;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) {
  return get_optional(key).value_or(fallback);
}

double ConfigFile::get_double(const std::string& key, double fallback) {
  const auto v = get_optional(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used == v->size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(where(key) + ": '" + key + "' expects a number, got '" + *v + "'");
}

int ConfigFile::get_int(const std::string& key, int fallback) {
  const auto v = get_optional(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const int i = std::stoi(*v, &used);
    if (used == v->size()) return i;
  } catch (const std::exception&) {
  }
  throw ConfigError(where(key) + ": '" + key + "' expects an integer, got '" + *v + "'");
}

std::uint64_t ConfigFile::get_u64(const std::string& key, std::uint64_t fallback) {
  const auto v = get_optional(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    if (!v->empty() && (*v)[0] != '-') {
      const auto u = std::stoull(*v, &used);
      if (used == v->size()) return u;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(where(key) + ": '" + key + "' expects an unsigned integer, got '" + *v + "'");
}

std::vector<double> ConfigFile::get_doubles(const std::string& key, const std::vector<double>& fallback) {
  const auto v = get_optional(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(where(key) + ": '" + key + "' expects a comma-separated list of numbers");
    }
  }
  return out;
}

std::vector<int> ConfigFile::get_ints(const std::string& key, const std::vector<int>& fallback) {
  const auto v = get_optional(key);
  if (!v) return fallback;
  std::vector<int> out;
  for (const auto& item : split_list(*v)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(where(key) + ": '" + key + "' expects a comma-separated list of integers");
    }
  }
  return out;
}

void ConfigFile::reject_unknown() const {
  for (const auto& [key, entry] : entries_) {
    if (!used_.count(key)) throw ConfigError(where(key) + ": unknown key '" + key + "'");
  }
}

GeneratorSpec read_generator_spec(ConfigFile& cfg) {
  GeneratorSpec spec;
  const std::string kind = cfg.get_string("generator.kind", "linear");
  if (kind == "linear") {
    spec.kind = GeneratorKind::Linear;
  } else if (kind == "norm") {
    spec.kind = GeneratorKind::Norm;
  } else if (kind == "angular") {
    spec.kind = GeneratorKind::Angular;
    spec.d_t = 2;
  } else {
    throw ConfigError("generator.kind: unknown generator '" + kind + "'");
  }
  spec.d_in = cfg.get_int("generator.d_in", spec.d_in);
  spec.d_t = cfg.get_int("generator.d_t", spec.d_t);
  spec.noise = cfg.get_double("generator.noise", spec.noise);
  spec.size = cfg.get_int("generator.size", spec.size);
  return spec;
}

AugmentationSpec read_augmentation(ConfigFile& cfg) {
  AugmentationSpec spec;
  spec.gaussian_sigma = cfg.get_double("augment.sigma", spec.gaussian_sigma);
  spec.dropout_prob = cfg.get_double("augment.dropout", spec.dropout_prob);
  spec.scale_lo = cfg.get_double("augment.scale_lo", spec.scale_lo);
  spec.scale_hi = cfg.get_double("augment.scale_hi", spec.scale_hi);
  spec.validate();
  return spec;
}

TrainConfig read_train_config(ConfigFile& cfg) {
  TrainConfig c;
  c.scheme = parse_scheme(cfg.get_string("train.scheme", std::string(to_string(c.scheme))));
  c.encoder_loss = parse_encoder_loss(cfg.get_string("train.encoder_loss", std::string(to_string(c.encoder_loss))));
  c.regression.kind = parse_regression_kind(cfg.get_string("train.regression_loss", "l1"));
  c.regression.huber_beta = cfg.get_double("train.huber_beta", c.regression.huber_beta);
  c.tau = cfg.get_double("train.tau", c.tau);
  c.lambda = cfg.get_double("train.lambda", c.lambda);
  c.epochs_encoder = cfg.get_int("train.epochs_encoder", c.epochs_encoder);
  c.epochs_predictor = cfg.get_int("train.epochs_predictor", c.epochs_predictor);
  c.epochs_finetune = cfg.get_int("train.epochs_finetune", c.epochs_finetune);
  c.batch_size = cfg.get_int("train.batch_size", c.batch_size);
  c.sim_kind = parse_similarity_kind(cfg.get_string("train.similarity", std::string(to_string(c.sim_kind))));
  c.dist_kind = parse_label_distance_kind(cfg.get_string("train.label_distance", std::string(to_string(c.dist_kind))));
  c.num_bins = cfg.get_int("train.num_bins", c.num_bins);
  c.seed = cfg.get_u64("train.seed", c.seed);

  c.encoder_opt.lr_base = cfg.get_double("train.lr", c.encoder_opt.lr_base);
  c.encoder_opt.lr_min = cfg.get_double("train.lr_min", c.encoder_opt.lr_min);
  c.encoder_opt.momentum = cfg.get_double("train.momentum", c.encoder_opt.momentum);
  c.encoder_opt.weight_decay = cfg.get_double("train.weight_decay", c.encoder_opt.weight_decay);
  c.predictor_opt.lr_base = cfg.get_double("train.predictor_lr", c.predictor_opt.lr_base);
  c.predictor_opt.lr_min = cfg.get_double("train.predictor_lr_min", c.predictor_opt.lr_min);
  c.predictor_opt.momentum = cfg.get_double("train.predictor_momentum", c.predictor_opt.momentum);
  c.predictor_opt.weight_decay = cfg.get_double("train.predictor_weight_decay", c.predictor_opt.weight_decay);

  c.hidden = cfg.get_ints("model.hidden", c.hidden);
  c.embed_dim = cfg.get_int("model.embed_dim", c.embed_dim);
  c.projection_dim = cfg.get_int("model.projection_dim", c.projection_dim);
  c.augmentation = read_augmentation(cfg);
  c.validate();
  return c;
}

std::optional<std::uint64_t> seed_from_env() {
  const char* raw = std::getenv("SUPCR_SEED");
  if (!raw || !*raw) return std::nullopt;
  try {
    std::size_t used = 0;
    const std::string s(raw);
    if (s[0] != '-') {
      const auto v = std::stoull(s, &used);
      if (used == s.size()) return v;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("SUPCR_SEED must be an unsigned integer");
}

}  // namespace supcr
