#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace supcr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitVerification = 3;
inline constexpr int kExitRuntime = 4;

struct CommandIO {
  std::ostream& out;
  std::ostream& err;
};

/// Each command returns its process exit code; exceptions are mapped by run_guarded().
int cmd_gen_data(const std::string& config_path, const std::optional<std::string>& out_path, CommandIO io);
int cmd_train(const std::string& config_path, CommandIO io);
int cmd_eval(const std::string& model_path, const std::string& data_path, const std::optional<std::string>& out_path,
             CommandIO io);
int cmd_verify_theory(const std::optional<std::string>& config_path, const std::optional<std::string>& out_path,
                      CommandIO io);
int cmd_grad_check(const std::optional<std::string>& config_path, const std::optional<std::string>& out_path,
                   CommandIO io);
int cmd_export_embeddings(const std::string& model_path, const std::string& data_path, const std::string& out_path,
                          CommandIO io);
int cmd_bench(const std::vector<int>& sizes, int repeats, CommandIO io);

/// Runs `body`, translating config errors to 2 and runtime/numeric errors to 4.
int run_guarded(const std::function<int()>& body, CommandIO io);

}  // namespace supcr
