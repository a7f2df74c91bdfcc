#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "supcr/commands.hpp"
#include "test_util.hpp"

using namespace supcr;
using supcr::testing::read_file;
using supcr::testing::TempDir;
using supcr::testing::write_file;

namespace {

struct Capture {
  std::ostringstream out;
  std::ostringstream err;
  CommandIO io() { return {out, err}; }
};

long line_count(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

long occurrences(const std::string& text, const std::string& needle) {
  long count = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++count;
  return count;
}

int guarded(Capture& c, const std::function<int()>& body) { return run_guarded(body, c.io()); }

void write_train_config(const TempDir& dir, const std::string& name, const std::string& scheme,
                        const std::string& extra = "") {
  write_file(dir.file(name), "data.path = " + dir.file("data.csv") +
                                 "\n"
                                 "train.scheme = " +
                                 scheme +
                                 "\n"
                                 "train.epochs_encoder = 3\ntrain.epochs_predictor = 3\ntrain.batch_size = 16\n"
                                 "model.hidden = 8\nmodel.embed_dim = 4\n"
                                 "output.model = " +
                                 dir.file(name + ".model") + "\noutput.metrics = " + dir.file(name + ".json") + "\n" +
                                 extra);
}

void make_data(const TempDir& dir, int size = 120) {
  write_file(dir.file("gen.cfg"), "generator.kind = linear\ngenerator.d_in = 8\ngenerator.size = " +
                                      std::to_string(size) + "\noutput.data = " + dir.file("data.csv") + "\n");
  Capture c;
  REQUIRE(cmd_gen_data(dir.file("gen.cfg"), std::nullopt, c.io()) == kExitOk);
}

}  // namespace

TEST_CASE("gen-data writes header plus rows and is reproducible") {
  TempDir dir("gen");
  write_file(dir.file("g.cfg"), "generator.size = 1000\ngenerator.d_in = 8\n");
  Capture c;
  CHECK(cmd_gen_data(dir.file("g.cfg"), dir.file("a.csv"), c.io()) == kExitOk);
  CHECK(cmd_gen_data(dir.file("g.cfg"), dir.file("b.csv"), c.io()) == kExitOk);
  const std::string a = read_file(dir.file("a.csv"));
  CHECK(line_count(a) == 1001);
  CHECK(a.rfind("f0,f1,f2,f3,f4,f5,f6,f7,y0\n", 0) == 0);
  CHECK(a == read_file(dir.file("b.csv")));
  CHECK(c.out.str().find("1000") != std::string::npos);
}

TEST_CASE("unknown config keys are rejected with exit code 2") {
  TempDir dir("unknown");
  write_file(dir.file("g.cfg"), "generator.size = 10\ngenerator.sizee = 11\n");
  Capture c;
  CHECK(guarded(c, [&] { return cmd_gen_data(dir.file("g.cfg"), dir.file("x.csv"), c.io()); }) == kExitConfig);
  CHECK(c.err.str().find("g.cfg:2") != std::string::npos);
}

TEST_CASE("unwritable output is a runtime error") {
  TempDir dir("unwritable");
  write_file(dir.file("g.cfg"), "generator.size = 10\n");
  Capture c;
  CHECK(guarded(c, [&] { return cmd_gen_data(dir.file("g.cfg"), dir.file("missing/dir/x.csv"), c.io()); }) ==
        kExitRuntime);
}

TEST_CASE("train logs both phases for linear probing and one for direct") {
  TempDir dir("train");
  make_data(dir);
  write_train_config(dir, "probe.cfg", "linear_probing");
  write_train_config(dir, "direct.cfg", "direct");
  Capture probe;
  REQUIRE(cmd_train(dir.file("probe.cfg"), probe.io()) == kExitOk);
  CHECK(probe.out.str().find("encoder epoch") != std::string::npos);
  CHECK(probe.out.str().find("predictor epoch") != std::string::npos);
  Capture direct;
  REQUIRE(cmd_train(dir.file("direct.cfg"), direct.io()) == kExitOk);
  CHECK(direct.out.str().find("encoder epoch") == std::string::npos);
  CHECK(direct.out.str().find("direct epoch") != std::string::npos);
  const std::string json = read_file(dir.file("probe.cfg.json"));
  CHECK(json.find("\"mae\": ") != std::string::npos);
  CHECK(json.find("\"spearman\": ") != std::string::npos);
}

TEST_CASE("train is byte-deterministic and honours SUPCR_SEED") {
  TempDir dir("det");
  make_data(dir);
  write_train_config(dir, "a.cfg", "fine_tuning", "train.epochs_finetune = 2\n");
  Capture c;
  REQUIRE(cmd_train(dir.file("a.cfg"), c.io()) == kExitOk);
  const std::string model1 = read_file(dir.file("a.cfg.model"));
  const std::string json1 = read_file(dir.file("a.cfg.json"));
  REQUIRE(cmd_train(dir.file("a.cfg"), c.io()) == kExitOk);
  CHECK(read_file(dir.file("a.cfg.model")) == model1);
  CHECK(read_file(dir.file("a.cfg.json")) == json1);

  ::setenv("SUPCR_SEED", "99", 1);
  const int rc = cmd_train(dir.file("a.cfg"), c.io());
  ::unsetenv("SUPCR_SEED");
  REQUIRE(rc == kExitOk);
  CHECK(read_file(dir.file("a.cfg.model")) != model1);
}

TEST_CASE("train requires a data path") {
  TempDir dir("nodata");
  write_file(dir.file("t.cfg"), "train.scheme = direct\n");
  Capture c;
  CHECK(guarded(c, [&] { return cmd_train(dir.file("t.cfg"), c.io()); }) == kExitConfig);
}

TEST_CASE("eval and export-embeddings on a trained model") {
  TempDir dir("eval");
  make_data(dir, 60);
  write_train_config(dir, "t.cfg", "linear_probing");
  Capture c;
  REQUIRE(cmd_train(dir.file("t.cfg"), c.io()) == kExitOk);

  Capture e;
  REQUIRE(cmd_eval(dir.file("t.cfg.model"), dir.file("data.csv"), std::nullopt, e.io()) == kExitOk);
  CHECK(e.out.str().rfind("{\"mae\": ", 0) == 0);

  REQUIRE(cmd_export_embeddings(dir.file("t.cfg.model"), dir.file("data.csv"), dir.file("emb.csv"), c.io()) ==
          kExitOk);
  const std::string emb = read_file(dir.file("emb.csv"));
  CHECK(line_count(emb) == 61);
  CHECK(emb.rfind("id,e0,e1,e2,e3,y0\n", 0) == 0);
  REQUIRE(cmd_export_embeddings(dir.file("t.cfg.model"), dir.file("data.csv"), dir.file("emb2.csv"), c.io()) ==
          kExitOk);
  CHECK(read_file(dir.file("emb2.csv")) == emb);
}

TEST_CASE("export-embeddings with an identity encoder copies the features") {
  TempDir dir("identity");
  make_data(dir, 20);
  write_file(dir.file("id.model"),
             "supcr-model 1\nlabel_distance l1\nencoder 1\nlayer 8 8\n"
             "1 0 0 0 0 0 0 0\n0 1 0 0 0 0 0 0\n0 0 1 0 0 0 0 0\n0 0 0 1 0 0 0 0\n"
             "0 0 0 0 1 0 0 0\n0 0 0 0 0 1 0 0\n0 0 0 0 0 0 1 0\n0 0 0 0 0 0 0 1\n"
             "0 0 0 0 0 0 0 0\npredictor 8 1\n1\n1\n1\n1\n1\n1\n1\n1\n0\n");
  Capture c;
  REQUIRE(cmd_export_embeddings(dir.file("id.model"), dir.file("data.csv"), dir.file("e.csv"), c.io()) == kExitOk);
  const std::string data = read_file(dir.file("data.csv"));
  const std::string emb = read_file(dir.file("e.csv"));
  std::istringstream d(data), e(emb);
  std::string dl, el;
  std::getline(d, dl);
  std::getline(e, el);
  for (int row = 0; std::getline(d, dl) && std::getline(e, el); ++row)
    CHECK(el == std::to_string(row) + "," + dl);
}

TEST_CASE("eval rejects mismatched dimensions") {
  TempDir dir("mismatch");
  make_data(dir, 20);
  write_file(dir.file("m.model"), "supcr-model 1\nlabel_distance l1\nencoder 1\nlayer 3 1\n1\n1\n1\n0\npredictor 1 1\n1\n0\n");
  Capture c;
  CHECK(guarded(c, [&] { return cmd_eval(dir.file("m.model"), dir.file("data.csv"), std::nullopt, c.io()); }) ==
        kExitConfig);
}

TEST_CASE("verify-theory passes, reports every field and detects the faulty mask") {
  TempDir dir("verify");
  write_file(dir.file("v.cfg"), "verify.bound_batches = 200\nverify.tight_batches = 10\nverify.order_batches = 10\n");
  Capture ok;
  REQUIRE(cmd_verify_theory(dir.file("v.cfg"), dir.file("r1.txt"), ok.io()) == kExitOk);
  const std::string report = read_file(dir.file("r1.txt"));
  const long cases = occurrences(report, "case: ");
  CHECK(cases >= 10);
  for (const char* key : {"\nlower_bound: ", "\nepsilon: ", "\ngamma: ", "\ndelta: ", "\nachieved_loss: ",
                          "\nis_delta_ordered: "})
    CHECK(occurrences(report, key) == cases);
  REQUIRE(cmd_verify_theory(dir.file("v.cfg"), dir.file("r2.txt"), ok.io()) == kExitOk);
  CHECK(read_file(dir.file("r2.txt")) == report);

  write_file(dir.file("f.cfg"), "verify.bound_batches = 200\nverify.fault = strict_mask\n");
  Capture bad;
  CHECK(cmd_verify_theory(dir.file("f.cfg"), dir.file("r3.txt"), bad.io()) == kExitVerification);
  CHECK(bad.err.str().find("lower bound violated") != std::string::npos);
}

TEST_CASE("grad-check passes and detects the dropped transpose") {
  TempDir dir("grad");
  write_file(dir.file("g.cfg"), "grad.configs = 20\ngrad.mlp_configs = 5\n");
  Capture ok;
  REQUIRE(cmd_grad_check(dir.file("g.cfg"), dir.file("r.txt"), ok.io()) == kExitOk);
  CHECK(read_file(dir.file("r.txt")).find("max_rel_error: ") != std::string::npos);
  write_file(dir.file("f.cfg"), "grad.configs = 20\ngrad.fault = drop_transpose\n");
  Capture bad;
  CHECK(cmd_grad_check(dir.file("f.cfg"), std::nullopt, bad.io()) == kExitVerification);
  CHECK(bad.err.str().find("supcr_grad_") != std::string::npos);
}

TEST_CASE("bench prints one row per size") {
  Capture c;
  REQUIRE(cmd_bench({4, 8}, 2, c.io()) == kExitOk);
  CHECK(line_count(c.out.str()) == 3);
  CHECK_THROWS_AS(cmd_bench({3}, 1, c.io()), ConfigError);
}
