#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "salienteye/corpus.hpp"
#include "salienteye/engagement.hpp"
#include "salienteye/error.hpp"
#include "salienteye/evaluation.hpp"
#include "salienteye/features.hpp"
#include "salienteye/labeling.hpp"
#include "salienteye/ranking.hpp"
#include "salienteye/run_config.hpp"
#include "salienteye/style.hpp"
#include "salienteye/version.hpp"

// Command implementations behind the CLI. Each cmd_* throws on failure;
// run_command maps the error taxonomy onto the exit-code contract:
// 0 success, 2 input/validation, 3 data insufficiency, 4 model/artifact.

namespace salienteye {

template <typename Fn>
int run_command(Fn&& fn, std::ostream& err) {
  try {
    fn();
    return 0;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const ModelError& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

namespace detail {

// Backbone problems exit 4 regardless of whether the manifest or the
// model file is at fault.
inline Backbone load_backbone_for_command(const RunConfig& cfg) {
  if (cfg.backbone_manifest.empty())
    throw ModelError("no backbone manifest configured (use --backbone or the config file)");
  try {
    return Backbone(load_backbone_manifest(cfg.backbone_manifest));
  } catch (const ModelError&) {
    throw;
  } catch (const Error& e) {
    throw ModelError(e.what());
  }
}

inline FeatureCache open_cache(const RunConfig& cfg, const Backbone& backbone) {
  const auto dir = resolve_cache_dir(cfg);
  if (dir.empty()) return {};
  return FeatureCache(dir, backbone.cache_key());
}

inline Embedding embedding_cached(const Backbone& backbone, const FeatureCache& cache,
                                  const std::filesystem::path& image_path) {
  const std::string image_hash = hash_file(image_path);
  if (auto hit = cache.load_embedding(image_hash, backbone.manifest().embedding_tap)) return *hit;
  const auto tensor = load_image(image_path, backbone.manifest().preprocess);
  Embedding e = backbone.extract_embedding(tensor);
  cache.store_embedding(image_hash, backbone.manifest().embedding_tap, e);
  return e;
}

inline std::vector<FeatureMap> style_maps_cached(const Backbone& backbone,
                                                 const FeatureCache& cache,
                                                 const std::filesystem::path& image_path) {
  const std::string image_hash = hash_file(image_path);
  std::vector<FeatureMap> maps;
  bool complete = cache.enabled();
  for (const auto& tap : backbone.manifest().style_taps) {
    auto hit = complete ? cache.load(image_hash, tap.layer) : std::nullopt;
    if (!hit) {
      complete = false;
      break;
    }
    hit->depth_index = tap.depth;
    maps.push_back(std::move(*hit));
  }
  if (complete) return maps;
  const auto tensor = load_image(image_path, backbone.manifest().preprocess);
  maps = backbone.extract_style_maps(tensor);
  for (const auto& fm : maps) cache.store(image_hash, fm);
  return maps;
}

struct CachedExtraction {
  Embedding embedding;
  std::vector<FeatureMap> style_maps;
};

inline CachedExtraction extract_all_cached(const Backbone& backbone, const FeatureCache& cache,
                                           const std::filesystem::path& image_path) {
  const std::string image_hash = hash_file(image_path);
  CachedExtraction out;
  bool complete = cache.enabled();
  if (complete) {
    if (auto e = cache.load_embedding(image_hash, backbone.manifest().embedding_tap))
      out.embedding = std::move(*e);
    else
      complete = false;
  }
  if (complete) {
    for (const auto& tap : backbone.manifest().style_taps) {
      auto hit = cache.load(image_hash, tap.layer);
      if (!hit) {
        complete = false;
        break;
      }
      hit->depth_index = tap.depth;
      out.style_maps.push_back(std::move(*hit));
    }
  }
  if (complete) return out;
  const auto tensor = load_image(image_path, backbone.manifest().preprocess);
  auto extraction = backbone.extract_all(tensor);
  cache.store_embedding(image_hash, backbone.manifest().embedding_tap, extraction.embedding);
  for (const auto& fm : extraction.style_maps) cache.store(image_hash, fm);
  return {std::move(extraction.embedding), std::move(extraction.style_maps)};
}

struct LabeledRecord {
  Post post;
  EngagementLabel label = EngagementLabel::Unlabeled;
};

inline std::vector<LabeledRecord> load_labeled_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read labeled dataset: " + path.string());
  const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : ".";
  std::vector<LabeledRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("labeled dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    LabeledRecord rec;
    try {
      rec.post.post_id = obj.at("post_id").get<std::string>();
      rec.post.account_id = obj.at("account_id").get<std::string>();
      rec.post.image_path = obj.at("image_path").get<std::string>();
      rec.post.timestamp = parse_iso8601(obj.at("timestamp").get<std::string>());
      rec.post.like_count = obj.at("like_count").get<std::int64_t>();
      rec.label = engagement_label_from_string(obj.at("label").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("labeled dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    std::filesystem::path img(rec.post.image_path);
    rec.post.resolved_path = img.is_absolute() ? img : base / img;
    rec.post.raw = std::move(obj);
    records.push_back(std::move(rec));
  }
  return records;
}

inline void ensure_out_dir(const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir))
    throw ValidationError("cannot create output directory: " + out_dir.string());
}

inline void check_artifacts_compatible(const HeadParams& head, const StyleProfile& profile,
                                       const Backbone& backbone) {
  if (head.embedding_dim != backbone.manifest().embedding_dim)
    throw ModelError("head embedding dim " + std::to_string(head.embedding_dim) +
                     " does not match backbone embedding dim " +
                     std::to_string(backbone.manifest().embedding_dim));
  const auto& taps = backbone.manifest().style_taps;
  if (profile.weights.size() != taps.size())
    throw ModelError("profile tap count " + std::to_string(profile.weights.size()) +
                     " does not match backbone style tap count " + std::to_string(taps.size()));
  for (std::size_t l = 0; l < taps.size(); ++l)
    if (profile.weights[l].layer != taps[l].layer)
      throw ModelError("profile tap '" + profile.weights[l].layer +
                       "' does not match backbone tap '" + taps[l].layer + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// label
// ---------------------------------------------------------------------------

inline void cmd_label(const std::filesystem::path& manifest_path, const RunConfig& cfg,
                      const std::filesystem::path& out_dir, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
  cfg.validate();
  std::vector<std::string> warnings;
  const AccountCorpus corpus = load_manifest(manifest_path, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";

  std::size_t missing_images = 0;
  for (const Post& p : corpus.posts)
    if (!std::filesystem::exists(p.resolved_path)) {
      err << "warning: missing image file: " << p.resolved_path.string() << "\n";
      ++missing_images;
    }

  const LabeledCorpus labeled = label_corpus(corpus, cfg.window_days, cfg.min_cohort);

  detail::ensure_out_dir(out_dir);
  std::ofstream ls(out_dir / "labeled.jsonl", std::ios::trunc);
  if (!ls) throw ValidationError("cannot write " + (out_dir / "labeled.jsonl").string());
  const auto out_abs = std::filesystem::absolute(out_dir).lexically_normal();
  for (const LabeledPost& lp : labeled.posts) {
    nlohmann::json line = lp.post.raw;
    // re-base image_path so it stays resolvable from the labeled file
    const auto img_abs = std::filesystem::absolute(lp.post.resolved_path).lexically_normal();
    const auto rel = img_abs.lexically_proximate(out_abs);
    line["image_path"] = rel.string();
    line["label"] = to_string(lp.label);
    nlohmann::json cohort_stats{{"size", lp.stats.cohort_size}};
    if (lp.label == EngagementLabel::Unlabeled) {
      cohort_stats["t1"] = nullptr;
      cohort_stats["t2"] = nullptr;
    } else {
      cohort_stats["t1"] = lp.stats.t1;
      cohort_stats["t2"] = lp.stats.t2;
    }
    line["cohort"] = std::move(cohort_stats);
    ls << line.dump() << "\n";
  }

  out << "High: " << labeled.counts.high << " Low: " << labeled.counts.low
      << " Average: " << labeled.counts.average << " Unlabeled: " << labeled.counts.unlabeled
      << "\n";
  if (missing_images) out << "Missing images: " << missing_images << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline void cmd_train(const std::filesystem::path& labeled_path, const RunConfig& cfg,
                      const std::filesystem::path& out_dir, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
  cfg.validate();
  const auto records = detail::load_labeled_jsonl(labeled_path);

  std::vector<const detail::LabeledRecord*> usable;
  for (const auto& rec : records) {
    if (rec.label != EngagementLabel::High && rec.label != EngagementLabel::Low) continue;
    if (!std::filesystem::exists(rec.post.resolved_path)) {
      err << "warning: skipping post '" << rec.post.post_id
          << "': missing image file " << rec.post.resolved_path.string() << "\n";
      continue;
    }
    usable.push_back(&rec);
  }
  std::size_t n_high = 0, n_low = 0;
  for (const auto* rec : usable)
    (rec->label == EngagementLabel::High ? n_high : n_low) += 1;
  if (n_high == 0 || n_low == 0)
    throw DataError("training data needs both classes after filtering to High/Low (found " +
                    std::to_string(n_high) + " High, " + std::to_string(n_low) + " Low)");

  const Backbone backbone = detail::load_backbone_for_command(cfg);
  const FeatureCache cache = detail::open_cache(cfg, backbone);

  std::vector<TrainingExample> dataset(usable.size());
  detail::parallel_for(usable.size(), [&](std::size_t i) {
    dataset[i].embedding =
        detail::embedding_cached(backbone, cache, usable[i]->post.resolved_path).values;
    dataset[i].high = usable[i]->label == EngagementLabel::High;
  });

  const auto result = train(dataset, cfg.train);

  detail::ensure_out_dir(out_dir);
  save_head({result.head, cfg.train, result.history}, out_dir / "head.json");

  char f1[32];
  std::snprintf(f1, sizeof(f1), "%.4f", result.history.back().macro_f1);
  out << "trained on " << dataset.size() << " posts (" << n_high << " High, " << n_low
      << " Low), " << result.steps << " steps\n";
  out << "final training macro F1: " << f1 << "\n";
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

inline void cmd_profile(const std::filesystem::path& manifest_path, const RunConfig& cfg,
                        const std::filesystem::path& out_dir, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  cfg.validate();
  std::vector<std::string> warnings;
  const AccountCorpus corpus = load_manifest(manifest_path, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  if (corpus.size() < cfg.style_n_ref)
    throw ValidationError("account '" + corpus.account_id + "' has " +
                          std::to_string(corpus.size()) + " posts, profile needs " +
                          std::to_string(cfg.style_n_ref) + " (shortfall " +
                          std::to_string(cfg.style_n_ref - corpus.size()) + ")");

  const Backbone backbone = detail::load_backbone_for_command(cfg);
  const FeatureCache cache = detail::open_cache(cfg, backbone);
  const LayerWeights weights = cfg.make_weights(backbone.manifest().style_taps);

  // the n_ref most recent posts represent the account's current style
  const std::size_t begin = corpus.size() - cfg.style_n_ref;
  std::vector<ReferenceEntry> entries(cfg.style_n_ref);
  detail::parallel_for(cfg.style_n_ref, [&](std::size_t i) {
    const Post& p = corpus.posts[begin + i];
    entries[i].id = p.post_id;
    entries[i].grams = gram_all(detail::style_maps_cached(backbone, cache, p.resolved_path));
  });

  const StyleProfile profile =
      build_profile(corpus.account_id, std::move(entries), cfg.style_k, weights);
  detail::ensure_out_dir(out_dir);
  save_profile(profile, out_dir / "profile.json");

  out << "profile: account " << profile.account_id << ", " << profile.n_ref() << " references, k="
      << profile.k << ", " << profile.weights.size() << " taps\n";
}

// ---------------------------------------------------------------------------
// rank
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::filesystem::path> expand_photo_args(
    const std::vector<std::filesystem::path>& args) {
  std::vector<std::filesystem::path> photos;
  for (const auto& arg : args) {
    if (std::filesystem::is_directory(arg)) {
      std::vector<std::filesystem::path> found;
      for (const auto& entry : std::filesystem::directory_iterator(arg)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());  // directory order is not deterministic
      photos.insert(photos.end(), found.begin(), found.end());
    } else if (std::filesystem::exists(arg)) {
      photos.push_back(arg);
    } else {
      throw ValidationError("photo path does not exist: " + arg.string());
    }
  }
  return photos;
}

}  // namespace detail

inline void cmd_rank(const std::vector<std::filesystem::path>& photo_args,
                     const std::filesystem::path& head_path,
                     const std::filesystem::path& profile_path, const RunConfig& cfg,
                     const std::filesystem::path& out_dir, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  (void)err;
  cfg.validate();
  const HeadArtifact artifact = load_head(head_path);
  const StyleProfile profile = load_profile(profile_path);
  const Backbone backbone = detail::load_backbone_for_command(cfg);
  detail::check_artifacts_compatible(artifact.head, profile, backbone);
  const FeatureCache cache = detail::open_cache(cfg, backbone);

  const auto photos = detail::expand_photo_args(photo_args);
  if (photos.empty()) throw ValidationError("no photos to rank");

  std::vector<Candidate> candidates(photos.size());
  detail::parallel_for(photos.size(), [&](std::size_t i) {
    const auto extraction = detail::extract_all_cached(backbone, cache, photos[i]);
    Candidate c;
    c.id = photos[i].string();
    c.source_path = photos[i];
    c.p_high = static_cast<double>(
        forward(artifact.head, std::span<const float>(extraction.embedding.values)).probs.p_high);
    c.style_dist = profile_distance(profile, gram_all(extraction.style_maps));
    candidates[i] = std::move(c);
  });
  min_max_normalize(candidates);

  const RankedList ranked = rank(std::move(candidates), cfg.rank_mode, cfg.rank_alpha);
  detail::ensure_out_dir(out_dir);
  emit_report(ranked, out_dir, cfg.echo());

  out << "rank  p_high    style_dist    style_norm  id\n";
  for (std::size_t i = 0; i < ranked.candidates.size(); ++i) {
    const auto& c = ranked.candidates[i];
    char row[256];
    std::snprintf(row, sizeof(row), "%-5zu %-9.4f %-13.6g %-11.4f %s", i + 1, c.p_high,
                  c.style_dist, c.style_norm, c.id.c_str());
    out << row << "\n";
  }
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

inline void cmd_eval(const RunConfig& cfg, const std::filesystem::path& out_dir,
                     std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  cfg.validate();
  if (cfg.eval.manifests.empty())
    throw ValidationError("eval: config must list eval.manifests");

  std::vector<AccountCorpus> loaded;
  for (const auto& path : cfg.eval.manifests) {
    std::vector<std::string> warnings;
    loaded.push_back(load_manifest(path, &warnings));
    for (const auto& w : warnings) err << "warning: " << w << "\n";
  }

  // merged groups come first (config order), ungrouped accounts keep
  // their manifest order
  std::vector<AccountCorpus> corpora;
  std::unordered_set<std::string> grouped;
  for (const auto& group : cfg.eval.groups) {
    std::vector<AccountCorpus> members;
    for (const auto& id : group.members) {
      const auto it = std::find_if(loaded.begin(), loaded.end(),
                                   [&](const AccountCorpus& c) { return c.account_id == id; });
      if (it == loaded.end())
        throw ValidationError("eval: group '" + group.id + "' references unknown account '" + id +
                              "'");
      members.push_back(*it);
      grouped.insert(id);
    }
    corpora.push_back(merge_accounts(members, group.id));
  }
  for (const auto& corpus : loaded)
    if (!grouped.count(corpus.account_id)) corpora.push_back(corpus);

  const Backbone backbone = detail::load_backbone_for_command(cfg);
  const LayerWeights weights = cfg.make_weights(backbone.manifest().style_taps);

  nlohmann::ordered_json report;
  report["version"] = version();

  const ConfusionMatrix cm = attribution_experiment(corpora, backbone, cfg.eval.n_ref,
                                                    cfg.eval.n_test, cfg.eval.k, &weights);
  report["attribution"] = cm.to_json();
  out << "attribution over " << corpora.size() << " accounts, " << cfg.eval.n_test
      << " test photos each\n";
  const auto percent = cm.row_percent();
  for (std::size_t r = 0; r < cm.labels.size(); ++r) {
    char row[64];
    std::snprintf(row, sizeof(row), "%6.1f%%", percent[r][r]);
    out << "  " << cm.labels[r] << ": diagonal " << row << "\n";
  }

  if (cfg.eval.cutoff) {
    const FeatureCache cache = detail::open_cache(cfg, backbone);
    nlohmann::ordered_json accounts = nlohmann::ordered_json::array();
    for (const auto& corpus : corpora) {
      const LabeledCorpus labeled = label_corpus(corpus, cfg.window_days, cfg.min_cohort);
      std::vector<const LabeledPost*> train_posts, test_posts;
      for (const auto& lp : labeled.posts) {
        if (lp.label != EngagementLabel::High && lp.label != EngagementLabel::Low) continue;
        (lp.post.timestamp < *cfg.eval.cutoff ? train_posts : test_posts).push_back(&lp);
      }
      std::size_t train_high = 0;
      for (const auto* lp : train_posts)
        if (lp->label == EngagementLabel::High) ++train_high;
      if (train_posts.empty() || train_high == 0 || train_high == train_posts.size())
        throw DataError("eval: account '" + corpus.account_id +
                        "' lacks both classes before the cutoff");
      if (test_posts.empty())
        throw DataError("eval: account '" + corpus.account_id + "' has no test posts after " +
                        format_iso8601(*cfg.eval.cutoff));

      auto to_examples = [&](const std::vector<const LabeledPost*>& posts) {
        std::vector<TrainingExample> examples(posts.size());
        detail::parallel_for(posts.size(), [&](std::size_t i) {
          examples[i].embedding =
              detail::embedding_cached(backbone, cache, posts[i]->post.resolved_path).values;
          examples[i].high = posts[i]->label == EngagementLabel::High;
        });
        return examples;
      };
      const auto train_set = to_examples(train_posts);
      const auto test_set = to_examples(test_posts);
      const auto trained = train(train_set, cfg.train);
      const auto eval_result = engagement_eval(trained.head, test_set);

      nlohmann::ordered_json entry;
      entry["account_id"] = corpus.account_id;
      entry["macro_f1"] = eval_result.macro_f1;
      entry["test_high"] = eval_result.n_high;
      entry["test_low"] = eval_result.n_low;
      entry["train_size"] = train_set.size();
      if (!eval_result.warning.empty()) entry["warning"] = eval_result.warning;
      accounts.push_back(std::move(entry));

      char f1[32];
      std::snprintf(f1, sizeof(f1), "%.4f", eval_result.macro_f1);
      out << "  " << corpus.account_id << ": engagement macro F1 " << f1 << "\n";
    }
    nlohmann::ordered_json engagement;
    engagement["cutoff"] = format_iso8601(*cfg.eval.cutoff);
    engagement["accounts"] = std::move(accounts);
    report["engagement"] = std::move(engagement);
  }

  report["config"] = cfg.echo();
  detail::ensure_out_dir(out_dir);
  const std::string text = report.dump(2) + "\n";
  detail::write_file_bytes(out_dir / "eval.json", text.data(), text.size());
  const std::string csv = cm.to_csv();
  detail::write_file_bytes(out_dir / "confusion.csv", csv.data(), csv.size());
}

}  // namespace salienteye
