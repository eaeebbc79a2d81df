#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "salienteye/corpus.hpp"
#include "salienteye/error.hpp"

namespace salienteye {

// Engagement relative to the post's own two-month cohort. Order matters:
// Low < Average < High (used by monotonicity checks). Unlabeled means the
// cohort was too small for trustworthy tertiles.
enum class EngagementLabel { Low = 0, Average = 1, High = 2, Unlabeled = 3 };

inline const char* to_string(EngagementLabel l) {
  switch (l) {
    case EngagementLabel::Low: return "Low";
    case EngagementLabel::Average: return "Average";
    case EngagementLabel::High: return "High";
    default: return "Unlabeled";
  }
}

inline EngagementLabel engagement_label_from_string(const std::string& s) {
  if (s == "Low") return EngagementLabel::Low;
  if (s == "Average") return EngagementLabel::Average;
  if (s == "High") return EngagementLabel::High;
  if (s == "Unlabeled") return EngagementLabel::Unlabeled;
  throw ValidationError("unknown engagement label: '" + s + "'");
}

struct CohortStats {
  std::size_t cohort_size = 0;
  std::int64_t t1 = 0;  // first-tertile like count
  std::int64_t t2 = 0;  // second-tertile like count
  int window_days = 30;
};

struct LabeledPost {
  Post post;
  EngagementLabel label = EngagementLabel::Unlabeled;
  CohortStats stats;
};

struct LabelCounts {
  std::size_t low = 0;
  std::size_t average = 0;
  std::size_t high = 0;
  std::size_t unlabeled = 0;

  std::size_t total() const { return low + average + high + unlabeled; }
};

inline constexpr int kDefaultWindowDays = 30;
inline constexpr std::size_t kDefaultMinCohort = 6;

namespace detail {

// Contiguous [first, last) index range of posts with timestamps within
// +-window seconds of ts. Relies on the corpus sort invariant.
inline std::pair<std::size_t, std::size_t> cohort_range(const AccountCorpus& corpus,
                                                        UnixSeconds ts, std::int64_t window) {
  const auto& posts = corpus.posts;
  const auto lo = std::lower_bound(posts.begin(), posts.end(), ts - window,
                                   [](const Post& p, UnixSeconds v) { return p.timestamp < v; });
  const auto hi = std::upper_bound(posts.begin(), posts.end(), ts + window,
                                   [](UnixSeconds v, const Post& p) { return v < p.timestamp; });
  return {static_cast<std::size_t>(lo - posts.begin()), static_cast<std::size_t>(hi - posts.begin())};
}

}  // namespace detail

// All posts q with |timestamp(q) - timestamp(post)| <= window_days * 86400,
// including the post itself.
inline std::vector<Post> cohort(const AccountCorpus& corpus, const Post& post, int window_days) {
  const auto in_corpus = std::any_of(corpus.posts.begin(), corpus.posts.end(),
                                     [&](const Post& q) { return q.post_id == post.post_id; });
  if (!in_corpus) throw ValidationError("post '" + post.post_id + "' not in corpus");
  const std::int64_t window = static_cast<std::int64_t>(window_days) * 86400;
  const auto [first, last] = detail::cohort_range(corpus, post.timestamp, window);
  return {corpus.posts.begin() + static_cast<std::ptrdiff_t>(first),
          corpus.posts.begin() + static_cast<std::ptrdiff_t>(last)};
}

// Nearest-rank tertiles over sorted like counts: t1 at 1-indexed rank
// ceil(n/3), t2 at rank ceil(2n/3).
inline std::pair<std::int64_t, std::int64_t> tertiles(std::vector<std::int64_t> likes) {
  if (likes.empty()) throw ValidationError("tertiles of an empty like list");
  std::sort(likes.begin(), likes.end());
  const std::size_t n = likes.size();
  const std::size_t r1 = (n + 2) / 3;       // ceil(n/3)
  const std::size_t r2 = (2 * n + 2) / 3;   // ceil(2n/3)
  return {likes[r1 - 1], likes[r2 - 1]};
}

namespace detail {

inline LabeledPost label_with_range(const AccountCorpus& corpus, const Post& post, int window_days,
                                    std::size_t min_cohort) {
  const std::int64_t window = static_cast<std::int64_t>(window_days) * 86400;
  const auto [first, last] = cohort_range(corpus, post.timestamp, window);
  LabeledPost out;
  out.post = post;
  out.stats.cohort_size = last - first;
  out.stats.window_days = window_days;
  if (out.stats.cohort_size < min_cohort) {
    out.label = EngagementLabel::Unlabeled;
    return out;
  }
  std::vector<std::int64_t> likes;
  likes.reserve(out.stats.cohort_size);
  for (std::size_t i = first; i < last; ++i) likes.push_back(corpus.posts[i].like_count);
  const auto [t1, t2] = tertiles(std::move(likes));
  out.stats.t1 = t1;
  out.stats.t2 = t2;
  if (post.like_count <= t1)
    out.label = EngagementLabel::Low;
  else if (post.like_count > t2)
    out.label = EngagementLabel::High;
  else
    out.label = EngagementLabel::Average;
  return out;
}

}  // namespace detail

// Classification rule: Low iff likes <= t1, High iff likes > t2, Average
// otherwise. Cohorts below min_cohort stay Unlabeled.
inline LabeledPost label_post(const AccountCorpus& corpus, const Post& post, int window_days,
                              std::size_t min_cohort) {
  const auto in_corpus = std::any_of(corpus.posts.begin(), corpus.posts.end(),
                                     [&](const Post& q) { return q.post_id == post.post_id; });
  if (!in_corpus) throw ValidationError("post '" + post.post_id + "' not in corpus");
  return detail::label_with_range(corpus, post, window_days, min_cohort);
}

struct LabeledCorpus {
  std::vector<LabeledPost> posts;
  LabelCounts counts;
};

inline LabeledCorpus label_corpus(const AccountCorpus& corpus, int window_days = kDefaultWindowDays,
                                  std::size_t min_cohort = kDefaultMinCohort) {
  LabeledCorpus out;
  out.posts.reserve(corpus.size());
  for (const Post& post : corpus.posts) {
    LabeledPost lp = detail::label_with_range(corpus, post, window_days, min_cohort);
    switch (lp.label) {
      case EngagementLabel::Low: ++out.counts.low; break;
      case EngagementLabel::Average: ++out.counts.average; break;
      case EngagementLabel::High: ++out.counts.high; break;
      case EngagementLabel::Unlabeled: ++out.counts.unlabeled; break;
    }
    out.posts.push_back(std::move(lp));
  }
  return out;
}

}  // namespace salienteye
