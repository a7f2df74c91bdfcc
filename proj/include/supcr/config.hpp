#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "supcr/batch.hpp"
#include "supcr/training.hpp"

namespace supcr {

/// Flat `section.key = value` file. '#' starts a comment. Every key must be
/// read by the command that loads the file; leftovers are reported by
/// reject_unknown() with their line numbers.
class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in, const std::string& source);
  static ConfigFile load(const std::string& path);
  static ConfigFile from_string(const std::string& text, const std::string& source = "<string>");

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback);
  std::optional<std::string> get_optional(const std::string& key);
  double get_double(const std::string& key, double fallback);
  int get_int(const std::string& key, int fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback);
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback);

  void reject_unknown() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::string where(const std::string& key) const;

  std::string source_;
  std::map<std::string, Entry> entries_;
  std::set<std::string> used_;
};

GeneratorSpec read_generator_spec(ConfigFile& cfg);
AugmentationSpec read_augmentation(ConfigFile& cfg);
TrainConfig read_train_config(ConfigFile& cfg);

/// SUPCR_SEED, when set to an unsigned integer.
std::optional<std::uint64_t> seed_from_env();

}  // namespace supcr
