#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "salienteye/corpus.hpp"
#include "salienteye/engagement.hpp"
#include "salienteye/error.hpp"
#include "salienteye/labeling.hpp"
#include "salienteye/style.hpp"

namespace salienteye {

// ---------------------------------------------------------------------------
// Macro F1 over High/Low labels
// ---------------------------------------------------------------------------

// Unweighted mean of per-class F1. A class with no true and no predicted
// members contributes 0 (standard degenerate-class convention).
inline double macro_f1(const std::vector<EngagementLabel>& preds,
                       const std::vector<EngagementLabel>& truths) {
  if (preds.size() != truths.size())
    throw ValidationError("macro_f1: length mismatch (" + std::to_string(preds.size()) + " vs " +
                          std::to_string(truths.size()) + ")");
  if (preds.empty()) throw ValidationError("macro_f1: empty input");
  std::vector<bool> pred_high(preds.size()), true_high(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if ((preds[i] != EngagementLabel::High && preds[i] != EngagementLabel::Low) ||
        (truths[i] != EngagementLabel::High && truths[i] != EngagementLabel::Low))
      throw ValidationError("macro_f1: labels must be High or Low");
    pred_high[i] = preds[i] == EngagementLabel::High;
    true_high[i] = truths[i] == EngagementLabel::High;
  }
  return detail::macro_f1_binary(pred_high, true_high);
}

// ---------------------------------------------------------------------------
// Engagement evaluation
// ---------------------------------------------------------------------------

struct EngagementEvalResult {
  double macro_f1 = 0.0;
  std::size_t n_high = 0;  // true class counts in the test set
  std::size_t n_low = 0;
  std::string warning;  // set when the test set is single-class
};

inline EngagementEvalResult engagement_eval(const HeadParams& head,
                                            const std::vector<TrainingExample>& test_set) {
  if (test_set.empty()) throw ValidationError("engagement_eval: empty test set");
  EngagementEvalResult result;
  std::vector<bool> pred_high(test_set.size()), true_high(test_set.size());
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    true_high[i] = test_set[i].high;
    pred_high[i] = predict(head, std::span<const float>(test_set[i].embedding)).first;
    if (test_set[i].high)
      ++result.n_high;
    else
      ++result.n_low;
  }
  if (result.n_high == 0 || result.n_low == 0)
    result.warning = "test set contains a single class (" +
                     std::string(result.n_high ? "High" : "Low") + " only)";
  result.macro_f1 = detail::macro_f1_binary(pred_high, true_high);
  return result;
}

// ---------------------------------------------------------------------------
// Confusion matrix (account attribution)
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  std::vector<std::string> labels;               // account order, rows = true, cols = predicted
  std::vector<std::vector<std::int64_t>> counts;

  std::vector<std::vector<double>> row_percent() const {
    std::vector<std::vector<double>> out(counts.size(),
                                         std::vector<double>(labels.size(), 0.0));
    for (std::size_t r = 0; r < counts.size(); ++r) {
      std::int64_t total = 0;
      for (std::int64_t v : counts[r]) total += v;
      if (total == 0) continue;
      for (std::size_t c = 0; c < counts[r].size(); ++c)
        out[r][c] = 100.0 * static_cast<double>(counts[r][c]) / static_cast<double>(total);
    }
    return out;
  }

  // Header row = predicted labels, first column = true labels.
  std::string to_csv() const {
    std::string csv = "true_account";
    for (const auto& l : labels) csv += "," + l;
    csv += "\n";
    for (std::size_t r = 0; r < counts.size(); ++r) {
      csv += labels[r];
      for (std::int64_t v : counts[r]) csv += "," + std::to_string(v);
      csv += "\n";
    }
    return csv;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["labels"] = labels;
    j["counts"] = counts;
    j["row_percent"] = row_percent();
    return j;
  }
};

// ---------------------------------------------------------------------------
// Style-attribution experiment
// ---------------------------------------------------------------------------

// Per account: the n_test most recent photos form the test set, the next
// n_ref most recent form the reference profile. Every test photo is
// attributed against all profiles; counts are row-per-true-account.
inline ConfusionMatrix attribution_experiment(const std::vector<AccountCorpus>& corpora,
                                              const Backbone& backbone, std::size_t n_ref,
                                              std::size_t n_test, std::size_t k,
                                              const LayerWeights* weights = nullptr) {
  if (corpora.size() < 2)
    throw ValidationError("attribution_experiment: need at least 2 accounts, got " +
                          std::to_string(corpora.size()));
  for (const auto& corpus : corpora)
    if (corpus.size() < n_ref + n_test)
      throw DataError("attribution_experiment: account '" + corpus.account_id + "' has " +
                      std::to_string(corpus.size()) + " posts, needs " +
                      std::to_string(n_ref + n_test) + " (shortfall " +
                      std::to_string(n_ref + n_test - corpus.size()) + ")");

  const LayerWeights w = weights ? *weights : default_weights(backbone.manifest().style_taps);

  struct TestPhoto {
    std::size_t account_index;
    std::vector<GramMatrix> grams;
  };
  std::vector<StyleProfile> profiles(corpora.size());
  std::vector<TestPhoto> test_photos;

  for (std::size_t a = 0; a < corpora.size(); ++a) {
    const auto& posts = corpora[a].posts;  // ascending; most recent at the back
    const std::size_t total = posts.size();
    std::vector<std::pair<std::string, ImageTensor>> refs(n_ref);
    const std::size_t ref_begin = total - n_test - n_ref;
    detail::parallel_for(n_ref, [&](std::size_t i) {
      const Post& p = posts[ref_begin + i];
      refs[i] = {p.post_id, load_image(p.resolved_path, backbone.manifest().preprocess)};
    });
    profiles[a] = build_profile(backbone, corpora[a].account_id, refs, k, &w);

    const std::size_t test_begin = total - n_test;
    const std::size_t first = test_photos.size();
    test_photos.resize(first + n_test);
    detail::parallel_for(n_test, [&](std::size_t i) {
      const Post& p = posts[test_begin + i];
      const auto tensor = load_image(p.resolved_path, backbone.manifest().preprocess);
      test_photos[first + i] = {a, gram_all(backbone.extract_style_maps(tensor))};
    });
  }

  ConfusionMatrix cm;
  for (const auto& corpus : corpora) cm.labels.push_back(corpus.account_id);
  cm.counts.assign(corpora.size(), std::vector<std::int64_t>(corpora.size(), 0));

  std::vector<std::size_t> predicted(test_photos.size());
  detail::parallel_for(test_photos.size(), [&](std::size_t i) {
    const auto result = attribute(test_photos[i].grams, profiles);
    for (std::size_t a = 0; a < corpora.size(); ++a)
      if (profiles[a].account_id == result.predicted_account) {
        predicted[i] = a;
        return;
      }
  });
  for (std::size_t i = 0; i < test_photos.size(); ++i)
    ++cm.counts[test_photos[i].account_index][predicted[i]];
  return cm;
}

// ---------------------------------------------------------------------------
// Account merging (NatGeo-collection style experiments)
// ---------------------------------------------------------------------------

// Concatenates posts under a new id; post_ids get a source-account prefix
// to stay unique.
inline AccountCorpus merge_accounts(const std::vector<AccountCorpus>& corpora,
                                    const std::string& merged_id) {
  if (corpora.empty()) throw ValidationError("merge_accounts: no corpora");
  AccountCorpus merged;
  merged.account_id = merged_id;
  std::unordered_set<std::string> ids;
  for (const auto& corpus : corpora) {
    for (Post post : corpus.posts) {
      post.post_id = corpus.account_id + "/" + post.post_id;
      post.account_id = merged_id;
      if (!ids.insert(post.post_id).second)
        throw Error("merge_accounts: post_id collision after prefixing: " + post.post_id);
      merged.posts.push_back(std::move(post));
    }
  }
  merged.sort_by_timestamp();
  return merged;
}

}  // namespace salienteye
