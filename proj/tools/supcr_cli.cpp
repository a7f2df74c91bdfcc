#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "supcr/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Supervised contrastive regression: data generation, training, evaluation and verification"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> config_opt;
  std::optional<std::string> out;
  std::string model;
  std::string data;
  std::string out_required;
  std::vector<int> sizes{16, 32, 64, 128, 256};
  int repeats = 5;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic regression dataset CSV");
  gen->add_option("-c,--config", config, "Config file")->required();
  gen->add_option("-o,--out", out, "Output CSV (overrides output.data)");

  auto* train = app.add_subcommand("train", "Train a model with the configured scheme");
  train->add_option("-c,--config", config, "Config file")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a saved model on a dataset");
  eval->add_option("-m,--model", model, "Model file")->required();
  eval->add_option("-d,--data", data, "Dataset CSV")->required();
  eval->add_option("-o,--out", out, "Metrics JSON (stdout when omitted)");

  auto* verify = app.add_subcommand("verify-theory", "Check the loss bound, tightness and delta-ordering");
  verify->add_option("-c,--config", config_opt, "Config file");
  verify->add_option("-o,--out", out, "Report file (overrides output.report)");

  auto* grad = app.add_subcommand("grad-check", "Finite-difference checks of the loss and MLP gradients");
  grad->add_option("-c,--config", config_opt, "Config file");
  grad->add_option("-o,--out", out, "Report file (overrides output.report)");

  auto* exp = app.add_subcommand("export-embeddings", "Write encoder embeddings of every sample");
  exp->add_option("-m,--model", model, "Model file")->required();
  exp->add_option("-d,--data", data, "Dataset CSV")->required();
  exp->add_option("-o,--out", out_required, "Embeddings CSV")->required();

  auto* bench = app.add_subcommand("bench", "Time the fast loss against the triple loop");
  bench->add_option("--sizes", sizes, "Batch sizes 2N");
  bench->add_option("--repeats", repeats, "Repetitions per size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : supcr::kExitConfig;
  }

  const supcr::CommandIO io{std::cout, std::cerr};
  return supcr::run_guarded(
      [&]() -> int {
        if (*gen) return supcr::cmd_gen_data(config, out, io);
        if (*train) return supcr::cmd_train(config, io);
        if (*eval) return supcr::cmd_eval(model, data, out, io);
        if (*verify) return supcr::cmd_verify_theory(config_opt, out, io);
        if (*grad) return supcr::cmd_grad_check(config_opt, out, io);
        if (*exp) return supcr::cmd_export_embeddings(model, data, out_required, io);
        return supcr::cmd_bench(sizes, repeats, io);
      },
      io);
}
