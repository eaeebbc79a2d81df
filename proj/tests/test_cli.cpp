#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "salienteye/detail/util.hpp"
#include "salienteye/run_config.hpp"
#include "salienteye/synthetic.hpp"
#include "support/temp_dir.hpp"

// End-to-end tests against the real binary: exit-code contract, output
// files, determinism.

namespace {

namespace fs = std::filesystem;
using namespace salienteye;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run_cli(const fs::path& cwd, const std::string& args) {
  const fs::path out = cwd / "_stdout.txt";
  const fs::path err = cwd / "_stderr.txt";
  const std::string cmd = "cd '" + cwd.string() + "' && '" + SALIENTEYE_CLI_PATH + "' " + args +
                          " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// standard fixture: tiny backbone + mixed demo account
struct CliFixture {
  TempDir dir{"cli"};

  CliFixture() {
    synthetic::write_tiny_backbone(dir.path(), 32);
    synthetic::write_mixed_corpus(dir.path(), "demo", 30, 77, 32);
    nlohmann::ordered_json cfg;
    cfg["backbone"] = "backbone.json";
    cfg["seed"] = 5;
    cfg["style"] = {{"k", 4}, {"n_ref", 10}};
    const std::string text = cfg.dump(2) + "\n";
    salienteye::detail::write_file_bytes(dir / "config.json", text.data(), text.size());
  }
};

}  // namespace

TEST(CliLabel, HappyPathPrintsSummary) {
  CliFixture fx;
  const auto r = run_cli(fx.dir.path(), "label demo.jsonl --config config.json --out out");
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("High: 10 Low: 10 Average: 10 Unlabeled: 0"), std::string::npos) << r.out;
  ASSERT_TRUE(fs::exists(fx.dir / "out" / "labeled.jsonl"));

  std::ifstream in(fx.dir / "out" / "labeled.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("label"));
    EXPECT_TRUE(j.at("cohort").contains("size"));
    EXPECT_TRUE(j.at("cohort").contains("t1"));
    EXPECT_TRUE(j.at("cohort").contains("t2"));
    ++lines;
  }
  EXPECT_EQ(lines, 30u);
}

TEST(CliLabel, RerunIsByteIdentical) {
  CliFixture fx;
  ASSERT_EQ(run_cli(fx.dir.path(), "label demo.jsonl --out outA").exit_code, 0);
  ASSERT_EQ(run_cli(fx.dir.path(), "label demo.jsonl --out outB").exit_code, 0);
  EXPECT_EQ(salienteye::detail::read_file_bytes(fx.dir / "outA" / "labeled.jsonl"),
            salienteye::detail::read_file_bytes(fx.dir / "outB" / "labeled.jsonl"));
}

TEST(CliLabel, MalformedManifestExitsTwoWithLineNumber) {
  CliFixture fx;
  std::ofstream bad(fx.dir / "bad.jsonl");
  bad << R"({"post_id":"a","account_id":"x","image_path":"i.png","timestamp":"2020-01-01T00:00:00Z","like_count":1})"
      << "\n";
  bad << "{ not json\n";
  bad.close();
  const auto r = run_cli(fx.dir.path(), "label bad.jsonl --out out");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST(CliLabel, MissingImagesWarnButLabelingSucceeds) {
  CliFixture fx;
  fs::remove(fx.dir / "demo" / "demo-000.png");
  fs::remove(fx.dir / "demo" / "demo-001.png");
  const auto r = run_cli(fx.dir.path(), "label demo.jsonl --out out");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("Missing images: 2"), std::string::npos) << r.out;
  EXPECT_NE(r.err.find("missing image file"), std::string::npos) << r.err;
}

TEST(CliTrain, ProducesHeadAndIsSeedDeterministic) {
  CliFixture fx;
  ASSERT_EQ(run_cli(fx.dir.path(), "label demo.jsonl --out lab").exit_code, 0);
  const auto r1 = run_cli(
      fx.dir.path(), "train lab/labeled.jsonl --backbone backbone.json --seed 9 --out t1");
  EXPECT_EQ(r1.exit_code, 0) << r1.err;
  EXPECT_NE(r1.out.find("final training macro F1:"), std::string::npos) << r1.out;

  const auto r2 = run_cli(
      fx.dir.path(), "train lab/labeled.jsonl --backbone backbone.json --seed 9 --out t2");
  EXPECT_EQ(r2.exit_code, 0);
  EXPECT_EQ(salienteye::detail::read_file_bytes(fx.dir / "t1" / "head.json"),
            salienteye::detail::read_file_bytes(fx.dir / "t2" / "head.json"));

  const auto head = nlohmann::json::parse(slurp(fx.dir / "t1" / "head.json"));
  EXPECT_EQ(head.at("history").size(), 10u);  // default epochs
  EXPECT_EQ(head.at("embedding_dim"), 8);
}

TEST(CliTrain, SingleClassDataExitsThree) {
  CliFixture fx;
  ASSERT_EQ(run_cli(fx.dir.path(), "label demo.jsonl --out lab").exit_code, 0);
  // keep only High posts
  std::ifstream in(fx.dir / "lab" / "labeled.jsonl");
  std::ofstream out(fx.dir / "high_only.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("label") == "High") out << line << "\n";
  }
  out.close();
  const auto r = run_cli(fx.dir.path(), "train high_only.jsonl --backbone backbone.json --out t");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("both classes"), std::string::npos) << r.err;
}

TEST(CliTrain, MissingBackboneExitsFour) {
  CliFixture fx;
  ASSERT_EQ(run_cli(fx.dir.path(), "label demo.jsonl --out lab").exit_code, 0);
  const auto r = run_cli(fx.dir.path(), "train lab/labeled.jsonl --backbone nope.json --out t");
  EXPECT_EQ(r.exit_code, 4);
  const auto r2 = run_cli(fx.dir.path(), "train lab/labeled.jsonl --out t");
  EXPECT_EQ(r2.exit_code, 4);  // no backbone configured at all
}

TEST(CliProfile, ShortfallExitsTwoAndRoundTripsOtherwise) {
  CliFixture fx;
  // default n_ref 100 > 30 posts
  const auto r = run_cli(fx.dir.path(), "profile demo.jsonl --backbone backbone.json --out p");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("shortfall"), std::string::npos) << r.err;

  const auto ok =
      run_cli(fx.dir.path(), "profile demo.jsonl --config config.json --out p");
  EXPECT_EQ(ok.exit_code, 0) << ok.err;
  EXPECT_TRUE(fs::exists(fx.dir / "p" / "profile.json"));
  EXPECT_TRUE(fs::exists(fx.dir / "p" / "profile.bin"));

  // byte-identical on rerun
  const auto again = run_cli(fx.dir.path(), "profile demo.jsonl --config config.json --out p2");
  EXPECT_EQ(again.exit_code, 0);
  EXPECT_EQ(salienteye::detail::read_file_bytes(fx.dir / "p" / "profile.bin"),
            salienteye::detail::read_file_bytes(fx.dir / "p2" / "profile.bin"));
  EXPECT_EQ(salienteye::detail::read_file_bytes(fx.dir / "p" / "profile.json"),
            salienteye::detail::read_file_bytes(fx.dir / "p2" / "profile.json"));
}

namespace {

// label + train + profile once, shared by the rank tests
CliFixture& trained_fixture() {
  static CliFixture* fx = [] {
    auto* f = new CliFixture();
    EXPECT_EQ(run_cli(f->dir.path(), "label demo.jsonl --out lab").exit_code, 0);
    EXPECT_EQ(run_cli(f->dir.path(),
                      "train lab/labeled.jsonl --config config.json --out train")
                  .exit_code,
              0);
    EXPECT_EQ(run_cli(f->dir.path(), "profile demo.jsonl --config config.json --out prof")
                  .exit_code,
              0);
    Rng rng(4242);
    fs::create_directories(f->dir / "new_photos");
    for (int i = 0; i < 6; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "cand-%02d.png", i);
      write_png(f->dir / "new_photos" / name,
                synthetic::texture_image(static_cast<synthetic::TextureFamily>(i % 3), 32, rng));
    }
    return f;
  }();
  return *fx;
}

}  // namespace

TEST(CliRank, SinglePhotoGetsRankOneAndZeroNorm) {
  auto& fx = trained_fixture();
  const auto r = run_cli(fx.dir.path(),
                         "rank new_photos/cand-00.png --head train/head.json "
                         "--profile prof/profile.json --config config.json --out rank1");
  EXPECT_EQ(r.exit_code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(fx.dir / "rank1" / "report.json"));
  ASSERT_EQ(report.at("candidates").size(), 1u);
  EXPECT_EQ(report["candidates"][0]["rank"], 1);
  EXPECT_EQ(report["candidates"][0]["style_norm"], 0.0);
  EXPECT_TRUE(fs::exists(fx.dir / "rank1" / "report.html"));
}

TEST(CliRank, DirectoryModeIsDeterministic) {
  auto& fx = trained_fixture();
  const std::string args =
      "rank new_photos --head train/head.json --profile prof/profile.json "
      "--config config.json --out ";
  EXPECT_EQ(run_cli(fx.dir.path(), args + "rankA").exit_code, 0);
  EXPECT_EQ(run_cli(fx.dir.path(), args + "rankB").exit_code, 0);
  EXPECT_EQ(salienteye::detail::read_file_bytes(fx.dir / "rankA" / "report.json"),
            salienteye::detail::read_file_bytes(fx.dir / "rankB" / "report.json"));
  const auto report = nlohmann::json::parse(slurp(fx.dir / "rankA" / "report.json"));
  EXPECT_EQ(report.at("candidates").size(), 6u);
  EXPECT_EQ(report.at("mode"), "combined");
  EXPECT_TRUE(report.contains("config"));
}

TEST(CliRank, ParetoKeepsOnlyNonDominated) {
  auto& fx = trained_fixture();
  const auto r = run_cli(fx.dir.path(),
                         "rank new_photos --head train/head.json --profile prof/profile.json "
                         "--config config.json --mode pareto --out rankP");
  EXPECT_EQ(r.exit_code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(fx.dir / "rankP" / "report.json"));
  EXPECT_EQ(report.at("mode"), "pareto");
  const auto& front = report.at("candidates");
  ASSERT_GE(front.size(), 1u);
  // nothing in the front dominates anything else in it
  for (const auto& a : front)
    for (const auto& b : front)
      EXPECT_FALSE(b["p_high"].get<double>() > a["p_high"].get<double>() &&
                   b["style_dist"].get<double>() < a["style_dist"].get<double>());
}

TEST(CliRank, ArtifactMismatchExitsFour) {
  auto& fx = trained_fixture();
  // doctor the head to a different embedding width
  auto head = nlohmann::json::parse(slurp(fx.dir / "train" / "head.json"));
  head["embedding_dim"] = 16;
  nlohmann::json w1 = nlohmann::json::array();
  for (int r = 0; r < 4; ++r) w1.push_back(std::vector<double>(16, 0.0));
  head["w1"] = w1;
  head["b1"] = std::vector<double>(4, 0.0);
  head["w2"] = {std::vector<double>(4, 0.0), std::vector<double>(4, 0.0)};
  std::ofstream(fx.dir / "bad_head.json") << head.dump();
  const auto r = run_cli(fx.dir.path(),
                         "rank new_photos --head bad_head.json --profile prof/profile.json "
                         "--config config.json --out rankX");
  EXPECT_EQ(r.exit_code, 4);
}

TEST(CliRank, CacheWarmsThroughEnvVar) {
  auto& fx = trained_fixture();
  const fs::path out = fx.dir / "_stdout.txt";
  const fs::path err = fx.dir / "_stderr.txt";
  const std::string cmd = "cd '" + fx.dir.path().string() + "' && SALIENTEYE_CACHE=envcache '" +
                          SALIENTEYE_CLI_PATH +
                          "' rank new_photos --head train/head.json --profile prof/profile.json "
                          "--config config.json --out rankC > '" +
                          out.string() + "' 2> '" + err.string() + "'";
  ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0) << slurp(err);
  std::size_t entries = 0;
  for (const auto& e : fs::recursive_directory_iterator(fx.dir / "envcache"))
    if (e.is_regular_file()) ++entries;
  EXPECT_EQ(entries, 6u * 3u);  // 6 photos x (feat1, feat2, embedding)
}

TEST(CliEval, AttributionWithGroupsAndConfusionCsv) {
  TempDir dir("clieval");
  synthetic::write_tiny_backbone(dir.path(), 32);
  synthetic::write_texture_corpus(dir.path(), "stripes", synthetic::TextureFamily::Stripes, 16,
                                  11, 32);
  synthetic::write_texture_corpus(dir.path(), "checkerboard",
                                  synthetic::TextureFamily::Checkerboard, 16, 12, 32);
  synthetic::write_texture_corpus(dir.path(), "noise", synthetic::TextureFamily::Noise, 16, 13,
                                  32);
  nlohmann::ordered_json cfg;
  cfg["backbone"] = "backbone.json";
  cfg["seed"] = 1;
  cfg["eval"] = {{"manifests", {"stripes.jsonl", "checkerboard.jsonl", "noise.jsonl"}},
                 {"groups", {{{"id", "patterned"}, {"members", {"stripes", "checkerboard"}}}}},
                 {"n_ref", 8},
                 {"n_test", 8},
                 {"k", 3}};
  std::ofstream(dir / "evalcfg.json") << cfg.dump(2);

  const auto r = run_cli(dir.path(), "eval --config evalcfg.json --out ev");
  EXPECT_EQ(r.exit_code, 0) << r.err;

  const std::string csv = slurp(dir / "ev" / "confusion.csv");
  // merged group + ungrouped noise account -> 2x2 matrix
  EXPECT_NE(csv.find("true_account,patterned,noise"), std::string::npos) << csv;
  const auto report = nlohmann::json::parse(slurp(dir / "ev" / "eval.json"));
  ASSERT_EQ(report.at("attribution").at("labels").size(), 2u);
  for (const auto& row : report["attribution"]["counts"]) {
    std::int64_t sum = 0;
    for (const auto& v : row) sum += v.get<std::int64_t>();
    EXPECT_EQ(sum, 8);
  }
}

// spec-scale texture fixture: diagonals of the confusion matrix must
// clear 90% through the CLI surface too
TEST(CliEval, TextureFixtureDiagonalsClearNinetyPercent) {
  TempDir dir("clieval");
  synthetic::write_tiny_backbone(dir.path(), 48);
  synthetic::write_texture_corpus(dir.path(), "stripes", synthetic::TextureFamily::Stripes, 40,
                                  61, 48);
  synthetic::write_texture_corpus(dir.path(), "checkerboard",
                                  synthetic::TextureFamily::Checkerboard, 40, 62, 48);
  synthetic::write_texture_corpus(dir.path(), "noise", synthetic::TextureFamily::Noise, 40, 63,
                                  48);
  nlohmann::ordered_json cfg;
  cfg["backbone"] = "backbone.json";
  cfg["seed"] = 1;
  cfg["eval"] = {{"manifests", {"stripes.jsonl", "checkerboard.jsonl", "noise.jsonl"}},
                 {"n_ref", 20},
                 {"n_test", 20},
                 {"k", 6}};
  std::ofstream(dir / "cfg.json") << cfg.dump(2);
  const auto r = run_cli(dir.path(), "eval --config cfg.json --out ev");
  EXPECT_EQ(r.exit_code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(dir / "ev" / "eval.json"));
  const auto& percent = report.at("attribution").at("row_percent");
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_GE(percent[i][i].get<double>(), 90.0) << "row " << i;
}

TEST(CliEval, MissingAccountDataExitsTwo) {
  TempDir dir("clieval");
  synthetic::write_tiny_backbone(dir.path(), 32);
  nlohmann::ordered_json cfg;
  cfg["backbone"] = "backbone.json";
  cfg["eval"] = {{"manifests", {"absent.jsonl"}}};
  std::ofstream(dir / "cfg.json") << cfg.dump(2);
  const auto r = run_cli(dir.path(), "eval --config cfg.json --out ev");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("absent.jsonl"), std::string::npos) << r.err;
}

TEST(CliEval, EngagementHalfRunsWithCutoff) {
  TempDir dir("clieval");
  synthetic::write_tiny_backbone(dir.path(), 32);
  synthetic::write_mixed_corpus(dir.path(), "acct_a", 40, 21, 32);
  synthetic::write_mixed_corpus(dir.path(), "acct_b", 40, 22, 32);
  // posts start 2021-01-01, daily; the cutoff keeps the last ~10 for testing
  nlohmann::ordered_json cfg;
  cfg["backbone"] = "backbone.json";
  cfg["seed"] = 3;
  cfg["eval"] = {{"manifests", {"acct_a.jsonl", "acct_b.jsonl"}},
                 {"n_ref", 10},
                 {"n_test", 10},
                 {"k", 4},
                 {"cutoff", "2021-01-31T00:00:00Z"}};
  std::ofstream(dir / "cfg.json") << cfg.dump(2);
  const auto r = run_cli(dir.path(), "eval --config cfg.json --out ev");
  EXPECT_EQ(r.exit_code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(dir / "ev" / "eval.json"));
  ASSERT_TRUE(report.contains("engagement"));
  EXPECT_EQ(report["engagement"]["cutoff"], "2021-01-31T00:00:00Z");
  ASSERT_EQ(report["engagement"]["accounts"].size(), 2u);
  for (const auto& acct : report["engagement"]["accounts"]) {
    EXPECT_GE(acct["macro_f1"].get<double>(), 0.0);
    EXPECT_LE(acct["macro_f1"].get<double>(), 1.0);
  }
}

TEST(CliMisc, VersionFlagWorks) {
  TempDir dir("cliver");
  const auto r = run_cli(dir.path(), "--version");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("0.1.0"), std::string::npos);
}

TEST(CliMisc, BadArgumentsExitTwo) {
  TempDir dir("cliargs");
  EXPECT_EQ(run_cli(dir.path(), "label").exit_code, 2);           // missing positional
  EXPECT_EQ(run_cli(dir.path(), "no_such_command x").exit_code, 2);
}

// ---------------------------------------------------------------------------
// run config (in-process)
// ---------------------------------------------------------------------------

TEST(RunConfig, DefaultsMatchPublishedRecipe) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.window_days, 30);
  EXPECT_EQ(cfg.min_cohort, 6u);
  EXPECT_EQ(cfg.train.lr0, 0.005);
  EXPECT_EQ(cfg.train.momentum, 0.9);
  EXPECT_EQ(cfg.train.decay, 1e-6);
  EXPECT_EQ(cfg.train.epochs, 10);
  EXPECT_EQ(cfg.train.batch_size, 64);
  EXPECT_EQ(cfg.style_k, 30u);
  EXPECT_EQ(cfg.style_n_ref, 100u);
  EXPECT_EQ(cfg.rank_alpha, 0.5);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(RunConfig, LoadsOverridesAndResolvesRelativePaths) {
  TempDir dir("runcfg");
  nlohmann::ordered_json j;
  j["backbone"] = "models/bb.json";
  j["seed"] = 99;
  j["window_days"] = 14;
  j["train"] = {{"epochs", 3}, {"batch_size", 16}};
  j["style"] = {{"k", 5}, {"n_ref", 12}, {"weights", "uniform"}};
  j["rank"] = {{"mode", "pareto"}, {"alpha", 0.25}};
  std::ofstream(dir / "cfg.json") << j.dump();

  const auto cfg = load_run_config(dir / "cfg.json");
  EXPECT_EQ(cfg.backbone_manifest, dir.path() / "models" / "bb.json");
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.train.seed, 99u);  // seed feeds training
  EXPECT_EQ(cfg.window_days, 14);
  EXPECT_EQ(cfg.train.epochs, 3);
  EXPECT_EQ(cfg.train.lr0, 0.005);  // untouched keys keep defaults
  EXPECT_EQ(cfg.style_k, 5u);
  EXPECT_EQ(cfg.weight_schedule, "uniform");
  EXPECT_EQ(cfg.rank_mode, RankMode::Pareto);
  EXPECT_EQ(cfg.rank_alpha, 0.25);

  // uniform schedule spreads weight evenly
  const auto w = cfg.make_weights({{"a", 1}, {"b", 2}});
  EXPECT_EQ(w[0].weight, 0.5);
  EXPECT_EQ(w[1].weight, 0.5);

  // echo is stable and carries the effective values
  EXPECT_EQ(cfg.echo().dump(), cfg.echo().dump());
  EXPECT_EQ(cfg.echo().at("window_days"), 14);
}

TEST(RunConfig, RejectsInvalidValues) {
  RunConfig cfg;
  cfg.style_k = 200;  // > n_ref
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = RunConfig{};
  cfg.weight_schedule = "exponential";
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = RunConfig{};
  cfg.rank_alpha = 2.0;
  EXPECT_THROW(cfg.validate(), ValidationError);

  TempDir dir("runcfg");
  std::ofstream(dir / "bad.json") << "{ nope";
  EXPECT_THROW(load_run_config(dir / "bad.json"), ValidationError);
  EXPECT_THROW(load_run_config(dir / "absent.json"), ValidationError);
}
