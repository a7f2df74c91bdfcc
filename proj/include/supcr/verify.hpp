#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "supcr/types.hpp"

namespace supcr {

/// One named check of a verification suite. The numeric fields describe the
/// case's representative batch (the tightest one for randomized cases).
struct SuiteCase {
  std::string name;
  bool passed = true;
  std::string detail;
  double lower_bound = 0.0;
  double epsilon = 0.0;
  double gamma = 0.0;
  std::optional<double> delta;
  double achieved_loss = 0.0;
  std::optional<bool> is_delta_ordered;
  std::vector<std::pair<std::string, std::string>> extra;
};

struct VerifyReport {
  std::vector<SuiteCase> cases;

  bool all_passed() const;
  const SuiteCase* first_failure() const;
  /// `key: value` lines, one blank line between cases.
  std::string to_text() const;
};

struct TheorySuiteOptions {
  std::uint64_t seed = 42;
  int bound_batches = 2000;
  int max_batch = 32;
  int equivalence_batches = 200;
  int tight_batches = 100;
  std::vector<double> epsilons = {0.1, 0.01, 0.001};
  std::vector<double> deltas = {0.3, 0.5, 0.9};
  int order_batches = 20;  // per delta
  int order_max_batch = 16;
  int optimize_steps = 3000;
  // Evaluate the loss with a strict "farther than" mask (plus k = j).
  bool fault_strict_mask = false;
};

VerifyReport run_theory_suite(const TheorySuiteOptions& options);

struct GradSuiteOptions {
  std::uint64_t seed = 42;
  int configs = 100;  // per similarity kind
  int max_batch = 16;
  int max_dim = 8;
  int mlp_configs = 20;
  double step = 1e-5;
  double threshold = 1e-4;
  // Chain only the upper triangle of dL/dS (drops anchor b's share of s_ab).
  bool fault_drop_transpose = false;
};

VerifyReport run_grad_suite(const GradSuiteOptions& options);

/// Central differences of f at x, one coordinate at a time.
Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double step);

/// max |a - n| / max(max |n|, 1e-12): relative error in the infinity norm.
double max_relative_error(const Matrix& analytic, const Matrix& numeric);

}  // namespace supcr
