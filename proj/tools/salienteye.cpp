// salienteye — personalized photo triage: engagement prediction and
// style-similarity ranking trained on a single account's posting history.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "salienteye/commands.hpp"
#include "salienteye/version.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string backbone_path;
  std::string cache_dir;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool backbone_set = false;
  bool cache_set = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--backbone", backbone_path, "backbone manifest path (overrides config)")
        ->each([this](const std::string&) { backbone_set = true; });
    cmd->add_option("--cache", cache_dir, "feature cache directory (overrides config)")
        ->each([this](const std::string&) { cache_set = true; });
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "seed for all randomness (overrides config)")
        ->each([this](const std::string&) { seed_set = true; });
  }

  salienteye::RunConfig resolve() const {
    salienteye::RunConfig cfg;
    if (!config_path.empty()) cfg = salienteye::load_run_config(config_path);
    if (backbone_set) cfg.backbone_manifest = backbone_path;
    if (cache_set) cfg.cache_dir = cache_dir;
    if (seed_set) {
      cfg.seed = seed;
      cfg.train.seed = seed;
    }
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"salienteye: per-account engagement prediction and style ranking"};
  app.set_version_flag("--version", salienteye::version());
  app.require_subcommand(1);

  CommonFlags label_flags, train_flags, profile_flags, rank_flags, eval_flags;
  std::string label_manifest, train_labeled, profile_manifest, rank_head, rank_profile;
  std::vector<std::string> rank_photos;
  std::string rank_mode;
  double rank_alpha = -1.0;

  auto* label = app.add_subcommand("label", "label posts by engagement tertiles");
  label->add_option("manifest", label_manifest, "account manifest (JSON-lines)")->required();
  label_flags.attach(label);

  auto* train = app.add_subcommand("train", "train the engagement head on labeled posts");
  train->add_option("labeled", train_labeled, "labeled dataset (labeled.jsonl)")->required();
  train_flags.attach(train);

  auto* profile = app.add_subcommand("profile", "build a style profile from recent posts");
  profile->add_option("manifest", profile_manifest, "account manifest (JSON-lines)")->required();
  profile_flags.attach(profile);

  auto* rank = app.add_subcommand("rank", "score and rank candidate photos");
  rank->add_option("photos", rank_photos, "photo files or directories")->required();
  rank->add_option("--head", rank_head, "trained head artifact (head.json)")->required();
  rank->add_option("--profile", rank_profile, "style profile (profile.json)")->required();
  rank->add_option("--mode", rank_mode, "engagement | style | combined | pareto");
  rank->add_option("--alpha", rank_alpha, "combined-mode weight on engagement [0,1]");
  rank_flags.attach(rank);

  auto* eval = app.add_subcommand("eval", "run the evaluation experiments from a config");
  eval_flags.attach(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad arguments are validation failures
  }

  using salienteye::run_command;
  if (label->parsed())
    return run_command(
        [&] { salienteye::cmd_label(label_manifest, label_flags.resolve(), label_flags.out_dir); },
        std::cerr);
  if (train->parsed())
    return run_command(
        [&] { salienteye::cmd_train(train_labeled, train_flags.resolve(), train_flags.out_dir); },
        std::cerr);
  if (profile->parsed())
    return run_command(
        [&] {
          salienteye::cmd_profile(profile_manifest, profile_flags.resolve(),
                                  profile_flags.out_dir);
        },
        std::cerr);
  if (rank->parsed())
    return run_command(
        [&] {
          salienteye::RunConfig cfg = rank_flags.resolve();
          if (!rank_mode.empty()) cfg.rank_mode = salienteye::rank_mode_from_string(rank_mode);
          if (rank_alpha >= 0.0) cfg.rank_alpha = rank_alpha;
          std::vector<std::filesystem::path> photos(rank_photos.begin(), rank_photos.end());
          salienteye::cmd_rank(photos, rank_head, rank_profile, cfg, rank_flags.out_dir);
        },
        std::cerr);
  if (eval->parsed())
    return run_command([&] { salienteye::cmd_eval(eval_flags.resolve(), eval_flags.out_dir); },
                       std::cerr);
  return 1;
}
