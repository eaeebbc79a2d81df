#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "salienteye/engagement.hpp"
#include "salienteye/error.hpp"
#include "salienteye/iso8601.hpp"
#include "salienteye/labeling.hpp"
#include "salienteye/ranking.hpp"

namespace salienteye {

// One JSON config file with flag overrides (flags win). Defaults match
// the published training recipe: 30-day window, lr 0.005, momentum 0.9,
// decay 1e-6, 10 epochs, batch 64, k 30, n_ref 100.
struct RunConfig {
  std::filesystem::path backbone_manifest;
  int window_days = kDefaultWindowDays;
  std::size_t min_cohort = kDefaultMinCohort;
  TrainConfig train;
  std::size_t style_k = 30;
  std::size_t style_n_ref = 100;
  std::string weight_schedule = "depth";  // "depth" or "uniform"
  RankMode rank_mode = RankMode::Combined;
  double rank_alpha = 0.5;
  std::filesystem::path cache_dir;
  std::uint64_t seed = 0;

  struct EvalGroup {
    std::string id;
    std::vector<std::string> members;  // account_ids to merge
  };
  struct EvalSpec {
    std::vector<std::filesystem::path> manifests;
    std::vector<EvalGroup> groups;
    std::size_t n_ref = 100;
    std::size_t n_test = 100;
    std::size_t k = 30;
    std::optional<UnixSeconds> cutoff;  // enables the engagement half
  } eval;

  void validate() const {
    train.validate();
    if (window_days < 0) throw ValidationError("config: window_days must be >= 0");
    if (style_k < 1 || style_k > style_n_ref)
      throw ValidationError("config: style k must be in [1, n_ref]");
    if (weight_schedule != "depth" && weight_schedule != "uniform")
      throw ValidationError("config: weight_schedule must be 'depth' or 'uniform'");
    if (rank_alpha < 0.0 || rank_alpha > 1.0)
      throw ValidationError("config: rank alpha must be in [0,1]");
  }

  LayerWeights make_weights(const std::vector<StyleTap>& taps) const {
    if (weight_schedule == "uniform") {
      LayerWeights w;
      for (const auto& tap : taps)
        w.push_back({tap.layer, tap.depth, 1.0 / static_cast<double>(taps.size())});
      return w;
    }
    return default_weights(taps);
  }

  // Effective configuration, echoed verbatim into every output artifact.
  nlohmann::ordered_json echo() const {
    nlohmann::ordered_json j;
    j["backbone"] = backbone_manifest.string();
    j["seed"] = seed;
    j["cache_dir"] = cache_dir.string();
    j["window_days"] = window_days;
    j["min_cohort"] = min_cohort;
    j["train"] = {{"lr0", train.lr0},           {"momentum", train.momentum},
                  {"decay", train.decay},       {"epochs", train.epochs},
                  {"batch_size", train.batch_size}, {"shuffle", train.shuffle}};
    j["style"] = {{"k", style_k}, {"n_ref", style_n_ref}, {"weights", weight_schedule}};
    j["rank"] = {{"mode", to_string(rank_mode)}, {"alpha", rank_alpha}};
    if (!eval.manifests.empty()) {
      nlohmann::ordered_json ev;
      nlohmann::ordered_json manifests = nlohmann::ordered_json::array();
      for (const auto& m : eval.manifests) manifests.push_back(m.string());
      ev["manifests"] = std::move(manifests);
      if (!eval.groups.empty()) {
        nlohmann::ordered_json groups = nlohmann::ordered_json::array();
        for (const auto& g : eval.groups)
          groups.push_back({{"id", g.id}, {"members", g.members}});
        ev["groups"] = std::move(groups);
      }
      ev["n_ref"] = eval.n_ref;
      ev["n_test"] = eval.n_test;
      ev["k"] = eval.k;
      if (eval.cutoff) ev["cutoff"] = format_iso8601(*eval.cutoff);
      j["eval"] = std::move(ev);
    }
    return j;
  }
};

// Loads the JSON config file; missing keys keep their defaults. Relative
// paths inside the file resolve against the file's directory.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : ".";
  auto resolve = [&](const std::string& p) -> std::filesystem::path {
    std::filesystem::path fp(p);
    return fp.is_absolute() || fp.empty() ? fp : base / fp;
  };

  RunConfig cfg;
  try {
    if (j.contains("backbone")) cfg.backbone_manifest = resolve(j["backbone"].get<std::string>());
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("cache_dir")) cfg.cache_dir = resolve(j["cache_dir"].get<std::string>());
    if (j.contains("window_days")) cfg.window_days = j["window_days"].get<int>();
    if (j.contains("min_cohort")) cfg.min_cohort = j["min_cohort"].get<std::size_t>();
    if (j.contains("train")) {
      const auto& t = j["train"];
      if (t.contains("lr0")) cfg.train.lr0 = t["lr0"].get<double>();
      if (t.contains("momentum")) cfg.train.momentum = t["momentum"].get<double>();
      if (t.contains("decay")) cfg.train.decay = t["decay"].get<double>();
      if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<int>();
      if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<int>();
      if (t.contains("shuffle")) cfg.train.shuffle = t["shuffle"].get<bool>();
    }
    if (j.contains("style")) {
      const auto& s = j["style"];
      if (s.contains("k")) cfg.style_k = s["k"].get<std::size_t>();
      if (s.contains("n_ref")) cfg.style_n_ref = s["n_ref"].get<std::size_t>();
      if (s.contains("weights")) cfg.weight_schedule = s["weights"].get<std::string>();
    }
    if (j.contains("rank")) {
      const auto& r = j["rank"];
      if (r.contains("mode")) cfg.rank_mode = rank_mode_from_string(r["mode"].get<std::string>());
      if (r.contains("alpha")) cfg.rank_alpha = r["alpha"].get<double>();
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      if (e.contains("manifests"))
        for (const auto& m : e["manifests"]) cfg.eval.manifests.push_back(resolve(m.get<std::string>()));
      if (e.contains("groups"))
        for (const auto& g : e["groups"])
          cfg.eval.groups.push_back(
              {g.at("id").get<std::string>(), g.at("members").get<std::vector<std::string>>()});
      if (e.contains("n_ref")) cfg.eval.n_ref = e["n_ref"].get<std::size_t>();
      if (e.contains("n_test")) cfg.eval.n_test = e["n_test"].get<std::size_t>();
      if (e.contains("k")) cfg.eval.k = e["k"].get<std::size_t>();
      if (e.contains("cutoff")) cfg.eval.cutoff = parse_iso8601(e["cutoff"].get<std::string>());
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError("config " + path.string() + ": " + ex.what());
  }
  cfg.train.seed = cfg.seed;
  return cfg;
}

// --cache flag > config cache_dir > SALIENTEYE_CACHE environment variable.
inline std::filesystem::path resolve_cache_dir(const RunConfig& cfg) {
  if (!cfg.cache_dir.empty()) return cfg.cache_dir;
  if (const char* env = std::getenv("SALIENTEYE_CACHE")) return env;
  return {};
}

}  // namespace salienteye
