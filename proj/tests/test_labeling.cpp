#include <gtest/gtest.h>

#include "salienteye/labeling.hpp"
#include "salienteye/rng.hpp"
#include "support/oracles.hpp"

using namespace salienteye;

namespace {

// posts at day offsets with given like counts, single account
AccountCorpus make_corpus(const std::vector<std::pair<int, std::int64_t>>& day_likes) {
  AccountCorpus corpus;
  corpus.account_id = "acct";
  int i = 0;
  for (const auto& [day, likes] : day_likes) {
    Post p;
    p.post_id = "p" + std::to_string(i++);
    p.account_id = "acct";
    p.timestamp = static_cast<UnixSeconds>(day) * 86400;
    p.like_count = likes;
    corpus.posts.push_back(p);
  }
  corpus.sort_by_timestamp();
  return corpus;
}

// nine posts on one day, likes 1..9
AccountCorpus nine_corpus() {
  std::vector<std::pair<int, std::int64_t>> day_likes;
  for (int i = 1; i <= 9; ++i) day_likes.push_back({0, i});
  return make_corpus(day_likes);
}

}  // namespace

// ---------------------------------------------------------------------------
// cohort
// ---------------------------------------------------------------------------

TEST(Cohort, WindowBoundaryIsInclusiveAtThirtyDays) {
  const auto corpus = make_corpus({{0, 1}, {10, 2}, {29, 3}, {31, 4}, {100, 5}});
  const auto peers = cohort(corpus, corpus.posts[0], 30);
  ASSERT_EQ(peers.size(), 3u);
  EXPECT_EQ(peers[0].post_id, "p0");
  EXPECT_EQ(peers[1].post_id, "p1");
  EXPECT_EQ(peers[2].post_id, "p2");  // day 31 is out, boundary is <= 30 days
}

TEST(Cohort, SingletonIncludesItself) {
  const auto corpus = make_corpus({{5, 10}});
  const auto peers = cohort(corpus, corpus.posts[0], 30);
  ASSERT_EQ(peers.size(), 1u);
  EXPECT_EQ(peers[0].post_id, "p0");
}

TEST(Cohort, ZeroWindowMatchesIdenticalTimestampsOnly) {
  auto corpus = make_corpus({{3, 1}, {3, 2}, {4, 3}});
  const auto peers = cohort(corpus, corpus.posts[0], 0);
  EXPECT_EQ(peers.size(), 2u);
}

TEST(Cohort, PostNotInCorpusFails) {
  const auto corpus = make_corpus({{0, 1}});
  Post stranger;
  stranger.post_id = "stranger";
  stranger.timestamp = 0;
  EXPECT_THROW(cohort(corpus, stranger, 30), ValidationError);
}

TEST(Cohort, ExactSecondBoundary) {
  AccountCorpus corpus;
  corpus.account_id = "acct";
  for (int i = 0; i < 3; ++i) {
    Post p;
    p.post_id = "p" + std::to_string(i);
    p.account_id = "acct";
    corpus.posts.push_back(p);
  }
  corpus.posts[0].timestamp = 0;
  corpus.posts[1].timestamp = 30 * 86400;      // exactly window seconds away
  corpus.posts[2].timestamp = 30 * 86400 + 1;  // one second past
  const auto peers = cohort(corpus, corpus.posts[0], 30);
  EXPECT_EQ(peers.size(), 2u);
}

// ---------------------------------------------------------------------------
// tertiles
// ---------------------------------------------------------------------------

TEST(Tertiles, NearestRankHandCases) {
  EXPECT_EQ(tertiles({1, 2, 3, 4, 5, 6, 7, 8, 9}), (std::pair<std::int64_t, std::int64_t>{3, 6}));
  EXPECT_EQ(tertiles({5}), (std::pair<std::int64_t, std::int64_t>{5, 5}));
  EXPECT_EQ(tertiles({7, 7, 7, 7}), (std::pair<std::int64_t, std::int64_t>{7, 7}));
  EXPECT_EQ(tertiles({9, 1, 5}), (std::pair<std::int64_t, std::int64_t>{1, 5}));
  EXPECT_THROW(tertiles({}), ValidationError);
}

TEST(Tertiles, MatchesNearestRankOracleOn200RandomCorpora) {
  Rng rng(12345);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<std::int64_t> likes(n);
    for (auto& v : likes) v = static_cast<std::int64_t>(rng.below(10001));
    const auto got = tertiles(likes);
    const auto want = oracle::tertiles_nearest_rank(likes);
    EXPECT_EQ(got, want) << "n=" << n;
  }
}

// ---------------------------------------------------------------------------
// label_post
// ---------------------------------------------------------------------------

TEST(LabelPost, LowAtOrBelowFirstTertile) {
  const auto corpus = nine_corpus();
  const auto& post_with_2 = corpus.posts[1];
  ASSERT_EQ(post_with_2.like_count, 2);
  const auto lp = label_post(corpus, post_with_2, 30, 6);
  EXPECT_EQ(lp.label, EngagementLabel::Low);
  EXPECT_EQ(lp.stats.t1, 3);
  EXPECT_EQ(lp.stats.t2, 6);
  EXPECT_EQ(lp.stats.cohort_size, 9u);
}

TEST(LabelPost, BoundaryValueAtSecondTertileIsAverage) {
  const auto corpus = nine_corpus();
  const auto& post_with_6 = corpus.posts[5];
  ASSERT_EQ(post_with_6.like_count, 6);
  // 6 is not strictly above t2=6
  EXPECT_EQ(label_post(corpus, post_with_6, 30, 6).label, EngagementLabel::Average);
}

TEST(LabelPost, SmallCohortIsUnlabeled) {
  const auto corpus = make_corpus({{0, 1}, {0, 2}, {0, 3}});
  const auto lp = label_post(corpus, corpus.posts[0], 30, 6);
  EXPECT_EQ(lp.label, EngagementLabel::Unlabeled);
  EXPECT_EQ(lp.stats.cohort_size, 3u);
}

TEST(LabelPost, MissingPostFails) {
  const auto corpus = nine_corpus();
  Post stranger;
  stranger.post_id = "stranger";
  EXPECT_THROW(label_post(corpus, stranger, 30, 6), ValidationError);
}

// ---------------------------------------------------------------------------
// label_corpus
// ---------------------------------------------------------------------------

TEST(LabelCorpus, EmptyCorpus) {
  const auto labeled = label_corpus(AccountCorpus{"acct", {}});
  EXPECT_TRUE(labeled.posts.empty());
  EXPECT_EQ(labeled.counts.total(), 0u);
}

TEST(LabelCorpus, NineLikesSplitEvenly) {
  const auto labeled = label_corpus(nine_corpus(), 30, 6);
  EXPECT_EQ(labeled.counts.low, 3u);
  EXPECT_EQ(labeled.counts.average, 3u);
  EXPECT_EQ(labeled.counts.high, 3u);
  EXPECT_EQ(labeled.counts.unlabeled, 0u);
}

// With all likes equal nothing exceeds t2, so High never fires; everything
// sits at or below t1. Brute-forced over corpus sizes.
TEST(LabelCorpus, ConstantLikesNeverYieldHigh) {
  for (std::size_t n = 1; n <= 20; ++n) {
    std::vector<std::pair<int, std::int64_t>> day_likes(n, {0, 42});
    const auto labeled = label_corpus(make_corpus(day_likes), 30, 1);
    EXPECT_EQ(labeled.counts.high, 0u) << "n=" << n;
    EXPECT_EQ(labeled.counts.low, n) << "n=" << n;
  }
}

TEST(LabelCorpus, PartitionPropertyOnRandomCorpora) {
  Rng rng(777);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::pair<int, std::int64_t>> day_likes;
    const std::size_t n = 1 + rng.below(60);
    for (std::size_t i = 0; i < n; ++i)
      day_likes.push_back({static_cast<int>(rng.below(200)),
                           static_cast<std::int64_t>(rng.below(1000))});
    const std::size_t min_cohort = 1 + rng.below(10);
    const auto labeled = label_corpus(make_corpus(day_likes), 30, min_cohort);
    EXPECT_EQ(labeled.counts.total(), n);
    for (const auto& lp : labeled.posts) {
      if (lp.stats.cohort_size >= min_cohort)
        EXPECT_NE(lp.label, EngagementLabel::Unlabeled);
      else
        EXPECT_EQ(lp.label, EngagementLabel::Unlabeled);
    }
  }
}

// Within one shared cohort, more likes can never mean a lower label
// (Low < Average < High).
TEST(LabelCorpus, MonotoneInLikesWithinFixedCohort) {
  Rng rng(31337);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::pair<int, std::int64_t>> day_likes;
    const std::size_t n = 6 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i)
      day_likes.push_back({0, static_cast<std::int64_t>(rng.below(100))});  // same day: one cohort
    const auto labeled = label_corpus(make_corpus(day_likes), 30, 6);
    for (const auto& a : labeled.posts) {
      ASSERT_NE(a.label, EngagementLabel::Unlabeled);
      for (const auto& b : labeled.posts) {
        if (a.post.like_count >= b.post.like_count) {
          EXPECT_GE(static_cast<int>(a.label), static_cast<int>(b.label));
        }
      }
    }
  }
}

// Adding a constant to every like count shifts both thresholds by exactly
// that constant and leaves every label unchanged.
TEST(LabelCorpus, ShiftInvariance) {
  Rng rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::pair<int, std::int64_t>> day_likes;
    const std::size_t n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i)
      day_likes.push_back({static_cast<int>(rng.below(90)),
                           static_cast<std::int64_t>(rng.below(500))});
    const std::int64_t c = static_cast<std::int64_t>(rng.below(1000));
    auto shifted = day_likes;
    for (auto& [day, likes] : shifted) likes += c;

    const auto base = label_corpus(make_corpus(day_likes), 30, 6);
    const auto moved = label_corpus(make_corpus(shifted), 30, 6);
    ASSERT_EQ(base.posts.size(), moved.posts.size());
    for (std::size_t i = 0; i < base.posts.size(); ++i) {
      EXPECT_EQ(base.posts[i].label, moved.posts[i].label);
      if (base.posts[i].label != EngagementLabel::Unlabeled) {
        EXPECT_EQ(base.posts[i].stats.t1 + c, moved.posts[i].stats.t1);
        EXPECT_EQ(base.posts[i].stats.t2 + c, moved.posts[i].stats.t2);
      }
    }
  }
}
