#include <gtest/gtest.h>

#include <cmath>

#include "salienteye/rng.hpp"
#include "salienteye/style.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace salienteye;

namespace {

FeatureMap make_map(std::string layer, int depth, std::int64_t n, std::int64_t m,
                    std::vector<float> data) {
  FeatureMap fm;
  fm.layer_name = std::move(layer);
  fm.depth_index = depth;
  fm.channels = n;
  fm.positions = m;
  fm.data = std::move(data);
  return fm;
}

FeatureMap random_map(Rng& rng, std::string layer, std::int64_t n, std::int64_t m) {
  std::vector<float> data(static_cast<std::size_t>(n * m));
  for (auto& v : data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  return make_map(std::move(layer), 1, n, m, std::move(data));
}

// single-entry gram with a chosen value; layer distance between two of
// these is (a-b)^2/4
GramMatrix scalar_gram(double value, std::string layer = "L") {
  GramMatrix g;
  g.layer_name = std::move(layer);
  g.depth_index = 1;
  g.n = 1;
  g.m = 1;
  g.values = {value};
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// gram
// ---------------------------------------------------------------------------

TEST(Gram, ZeroMapGivesZeroMatrix) {
  const auto g = gram(make_map("L", 1, 3, 4, std::vector<float>(12, 0.f)));
  EXPECT_EQ(g.n, 3);
  EXPECT_EQ(g.m, 4);
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Gram, HandCaseTwoByTwo) {
  // F = [[1,2],[3,4]] -> F F^T = [[5,11],[11,25]]
  const auto g = gram(make_map("L", 1, 2, 2, {1.f, 2.f, 3.f, 4.f}));
  EXPECT_EQ(g.at(0, 0), 5.0);
  EXPECT_EQ(g.at(0, 1), 11.0);
  EXPECT_EQ(g.at(1, 0), 11.0);
  EXPECT_EQ(g.at(1, 1), 25.0);
}

TEST(Gram, MatchesBruteForceOracle) {
  Rng rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(8));
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(16));
    const auto fm = random_map(rng, "L", n, m);
    const auto g = gram(fm);
    const auto expected = oracle::gram_naive(fm.data, n, m);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const double scale = std::max(std::abs(expected[i]), 1e-12);
      EXPECT_LE(std::abs(g.values[i] - expected[i]) / scale, 1e-6);
    }
  }
}

TEST(Gram, SymmetryIsExactAndDiagonalNonNegative) {
  Rng rng(72);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(8));
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(16));
    const auto g = gram(random_map(rng, "L", n, m));
    for (std::int64_t i = 0; i < n; ++i) {
      EXPECT_GE(g.at(i, i), 0.0);
      for (std::int64_t j = 0; j < n; ++j) EXPECT_EQ(g.at(i, j), g.at(j, i));  // bitwise
    }
  }
}

TEST(Gram, PositiveSemiDefinite) {
  Rng rng(73);
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t n = 2 + static_cast<std::int64_t>(rng.below(7));
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(16));
    const auto g = gram(random_map(rng, "L", n, m));
    const auto eig = oracle::symmetric_eigenvalues(g.values, n);
    double max_eig = 0.0;
    for (double v : eig) max_eig = std::max(max_eig, std::abs(v));
    for (double v : eig) EXPECT_GE(v, -1e-6 * max_eig) << "n=" << n << " m=" << m;
  }
}

// ---------------------------------------------------------------------------
// layer_distance
// ---------------------------------------------------------------------------

TEST(LayerDistance, IdenticalGramsGiveZero) {
  Rng rng(74);
  const auto g = gram(random_map(rng, "L", 4, 6));
  EXPECT_EQ(layer_distance(g, g), 0.0);
}

TEST(LayerDistance, ScalarHandCase) {
  EXPECT_EQ(layer_distance(scalar_gram(1.0), scalar_gram(0.0)), 0.25);
}

TEST(LayerDistance, SymmetricInArguments) {
  Rng rng(75);
  const auto a = gram(random_map(rng, "L", 5, 7));
  const auto b = gram(random_map(rng, "L", 5, 7));
  EXPECT_EQ(layer_distance(a, b), layer_distance(b, a));
}

TEST(LayerDistance, MatchesBruteForceOracle) {
  Rng rng(76);
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(8));
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(16));
    const auto fa = random_map(rng, "L", n, m);
    const auto fb = random_map(rng, "L", n, m);
    const auto got = layer_distance(gram(fa), gram(fb));
    const auto expected = oracle::layer_distance_naive(oracle::gram_naive(fa.data, n, m),
                                                       oracle::gram_naive(fb.data, n, m), n, m);
    const double scale = std::max(expected, 1e-12);
    EXPECT_LE(std::abs(got - expected) / scale, 1e-6);
  }
}

TEST(LayerDistance, MismatchedShapesFail) {
  EXPECT_THROW(layer_distance(scalar_gram(1.0, "A"), scalar_gram(1.0, "B")), ValidationError);
  auto a = scalar_gram(1.0);
  auto b = scalar_gram(1.0);
  b.m = 2;
  EXPECT_THROW(layer_distance(a, b), ValidationError);
}

// ---------------------------------------------------------------------------
// style_distance / default_weights
// ---------------------------------------------------------------------------

TEST(StyleDistance, SelfDistanceIsZeroAndSymmetric) {
  Rng rng(77);
  std::vector<FeatureMap> a, b;
  a.push_back(random_map(rng, "L1", 3, 5));
  a.push_back(random_map(rng, "L2", 4, 6));
  b.push_back(random_map(rng, "L1", 3, 5));
  b.push_back(random_map(rng, "L2", 4, 6));
  const LayerWeights w{{"L1", 1, 0.4}, {"L2", 2, 0.6}};
  EXPECT_EQ(style_distance(a, a, w), 0.0);
  const double ab = style_distance(a, b, w);
  EXPECT_GE(ab, 0.0);
  EXPECT_NEAR(style_distance(b, a, w), ab, 1e-9);
}

TEST(StyleDistance, LinearInWeights) {
  Rng rng(78);
  std::vector<FeatureMap> a{random_map(rng, "L1", 3, 5)};
  std::vector<FeatureMap> b{random_map(rng, "L1", 3, 5)};
  const LayerWeights w{{"L1", 1, 0.7}};
  LayerWeights doubled = w;
  doubled[0].weight *= 2.0;
  EXPECT_NEAR(style_distance(a, b, doubled), 2.0 * style_distance(a, b, w), 1e-9);
}

TEST(StyleDistance, WeightedSumHandCase) {
  // layer distances 0.2 and 0.6, weights 0.25 / 0.75 -> 0.5
  std::vector<GramMatrix> a{scalar_gram(std::sqrt(0.8), "L1"), scalar_gram(std::sqrt(2.4), "L2")};
  std::vector<GramMatrix> b{scalar_gram(0.0, "L1"), scalar_gram(0.0, "L2")};
  const LayerWeights w{{"L1", 1, 0.25}, {"L2", 2, 0.75}};
  EXPECT_NEAR(style_distance(a, b, w), 0.5, 1e-12);
}

TEST(StyleDistance, TapSetMismatchFails) {
  std::vector<GramMatrix> a{scalar_gram(1.0, "L1")};
  std::vector<GramMatrix> b{scalar_gram(1.0, "L2")};
  const LayerWeights w{{"L1", 1, 1.0}};
  EXPECT_THROW(style_distance(a, b, w), ValidationError);
  std::vector<GramMatrix> two{scalar_gram(1.0, "L1"), scalar_gram(1.0, "L2")};
  EXPECT_THROW(style_distance(a, two, w), ValidationError);
}

TEST(DefaultWeights, ProportionalToDepth) {
  const auto single = default_weights({{"only", 3}});
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].weight, 1.0);

  const auto five = default_weights({{"a", 1}, {"b", 2}, {"c", 3}, {"d", 4}, {"e", 5}});
  double sum = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(five[i].weight, static_cast<double>(i + 1) / 15.0, 1e-12);
    sum += five[i].weight;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_GT(five[i].weight, five[i - 1].weight);

  const auto two = default_weights({{"a", 2}, {"b", 4}});
  EXPECT_NEAR(two[0].weight, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(two[1].weight, 2.0 / 3.0, 1e-12);
}

// ---------------------------------------------------------------------------
// profiles
// ---------------------------------------------------------------------------

namespace {

// profile whose references produce chosen profile distances for a photo
// gram of value 0: ref value 2*sqrt(d) gives layer distance d
StyleProfile engineered_profile(const std::string& account, const std::vector<double>& distances,
                                std::size_t k) {
  std::vector<ReferenceEntry> refs;
  int i = 0;
  for (double d : distances)
    refs.push_back({"ref" + std::to_string(i++), {scalar_gram(2.0 * std::sqrt(d))}});
  return build_profile(account, std::move(refs), k, LayerWeights{{"L", 1, 1.0}});
}

}  // namespace

TEST(Profile, StoresGramsPerReferencePerTap) {
  Rng rng(80);
  std::vector<ReferenceEntry> refs;
  for (int r = 0; r < 100; ++r) {
    std::vector<GramMatrix> grams;
    for (int l = 0; l < 5; ++l)
      grams.push_back(gram(random_map(rng, "L" + std::to_string(l + 1), 2, 3)));
    refs.push_back({"ref" + std::to_string(r), std::move(grams)});
  }
  LayerWeights w;
  for (int l = 0; l < 5; ++l) w.push_back({"L" + std::to_string(l + 1), l + 1, 0.2});
  const auto profile = build_profile("acct", std::move(refs), 30, w);
  EXPECT_EQ(profile.n_ref(), 100u);
  std::size_t stored = 0;
  for (const auto& grams : profile.ref_grams) stored += grams.size();
  EXPECT_EQ(stored, 500u);
}

TEST(Profile, EmptyRefsAndBadKFail) {
  EXPECT_THROW(engineered_profile("a", {}, 1), DataError);
  EXPECT_THROW(engineered_profile("a", {1.0, 2.0}, 3), ValidationError);
  EXPECT_THROW(engineered_profile("a", {1.0, 2.0}, 0), ValidationError);
}

TEST(ProfileDistance, ZeroForIdenticalPhotoWithKOne) {
  const auto profile = engineered_profile("a", {0.0, 5.0, 9.0}, 1);
  // photo gram equal to ref0's gram
  EXPECT_EQ(profile_distance(profile, {scalar_gram(0.0)}), 0.0);
}

TEST(ProfileDistance, SumOfKSmallest) {
  const auto profile = engineered_profile("a", {4.0, 2.0, 1.0, 3.0}, 2);
  EXPECT_NEAR(profile_distance(profile, {scalar_gram(0.0)}), 3.0, 1e-9);  // 1 + 2
}

TEST(ProfileDistance, KEqualsNRefSumsEverything) {
  const auto profile = engineered_profile("a", {1.0, 2.0, 3.0, 4.0}, 4);
  EXPECT_NEAR(profile_distance(profile, {scalar_gram(0.0)}), 10.0, 1e-9);
}

TEST(ProfileDistance, MonotoneInK) {
  Rng rng(81);
  std::vector<double> dists;
  for (int i = 0; i < 10; ++i) dists.push_back(rng.uniform(0.0, 5.0));
  double previous = 0.0;
  for (std::size_t k = 1; k <= dists.size(); ++k) {
    const double total = profile_distance(engineered_profile("a", dists, k), {scalar_gram(0.0)});
    EXPECT_GE(total, previous - 1e-12);
    previous = total;
  }
}

// ---------------------------------------------------------------------------
// attribution
// ---------------------------------------------------------------------------

TEST(Attribute, OwnReferenceSetWins) {
  const auto own = engineered_profile("mine", {0.0, 1.0}, 1);
  const auto other = engineered_profile("other", {5.0, 6.0}, 1);
  const auto result = attribute({scalar_gram(0.0)}, {other, own});
  EXPECT_EQ(result.predicted_account, "mine");
  EXPECT_EQ(result.scores.at("mine"), 0.0);
  ASSERT_EQ(result.scores.size(), 2u);
}

TEST(Attribute, ExactTieBreaksLexicographically) {
  const auto a = engineered_profile("zeta", {2.0}, 1);
  const auto b = engineered_profile("alpha", {2.0}, 1);
  const auto result = attribute({scalar_gram(0.0)}, {a, b});
  EXPECT_EQ(result.predicted_account, "alpha");
}

TEST(Attribute, FewerThanTwoProfilesFails) {
  const auto only = engineered_profile("a", {1.0}, 1);
  EXPECT_THROW(attribute({scalar_gram(0.0)}, {only}), ValidationError);
  EXPECT_THROW(attribute({scalar_gram(0.0)}, {}), ValidationError);
}

TEST(Attribute, InconsistentProfilesFail) {
  const auto a = engineered_profile("a", {1.0, 2.0}, 1);
  const auto b = engineered_profile("b", {1.0, 2.0}, 2);  // different k
  EXPECT_THROW(attribute({scalar_gram(0.0)}, {a, b}), ValidationError);

  auto c = engineered_profile("c", {1.0, 2.0}, 1);
  c.weights[0].layer = "other";
  for (auto& grams : c.ref_grams) grams[0].layer_name = "other";
  EXPECT_THROW(attribute({scalar_gram(0.0)}, {a, c}), ValidationError);
}

// scaling every profile's weights by one positive constant cannot change
// the argmin
TEST(Attribute, ArgminInvariantUnderUniformWeightScaling) {
  Rng rng(82);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<StyleProfile> profiles;
    for (int p = 0; p < 3; ++p) {
      std::vector<double> dists;
      for (int i = 0; i < 5; ++i) dists.push_back(rng.uniform(0.1, 9.0));
      profiles.push_back(engineered_profile("acct" + std::to_string(p), dists, 2));
    }
    const auto base = attribute({scalar_gram(0.0)}, profiles);
    const double scale = rng.uniform(0.1, 50.0);
    auto scaled = profiles;
    for (auto& profile : scaled)
      for (auto& w : profile.weights) w.weight *= scale;
    const auto after = attribute({scalar_gram(0.0)}, scaled);
    EXPECT_EQ(base.predicted_account, after.predicted_account);
  }
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

TEST(ProfilePersistence, RoundTripPreservesStructureAndDistances) {
  TempDir dir("profile");
  Rng rng(83);
  std::vector<ReferenceEntry> refs;
  for (int r = 0; r < 6; ++r) {
    std::vector<GramMatrix> grams;
    grams.push_back(gram(random_map(rng, "feat1", 3, 10)));
    grams.push_back(gram(random_map(rng, "feat2", 5, 4)));
    refs.push_back({"ref" + std::to_string(r), std::move(grams)});
  }
  const LayerWeights w{{"feat1", 1, 1.0 / 3.0}, {"feat2", 2, 2.0 / 3.0}};
  const auto profile = build_profile("acct", std::move(refs), 3, w);
  save_profile(profile, dir / "profile.json");

  const auto loaded = load_profile(dir / "profile.json");
  EXPECT_EQ(loaded.account_id, "acct");
  EXPECT_EQ(loaded.k, 3u);
  EXPECT_EQ(loaded.ref_ids, profile.ref_ids);
  ASSERT_EQ(loaded.weights.size(), 2u);
  EXPECT_EQ(loaded.weights[1].layer, "feat2");
  EXPECT_NEAR(loaded.weights[1].weight, 2.0 / 3.0, 1e-12);

  // distances survive the float32 sidecar within quantization error
  const std::vector<GramMatrix> photo{gram(random_map(rng, "feat1", 3, 10)),
                                      gram(random_map(rng, "feat2", 5, 4))};
  const double before = profile_distance(profile, photo);
  const double after = profile_distance(loaded, photo);
  EXPECT_NEAR(after, before, 1e-4 * std::max(1.0, before));

  // index JSON carries exactly the documented keys
  std::ifstream in(dir / "profile.json");
  nlohmann::json index;
  in >> index;
  EXPECT_EQ(index.size(), 4u);
  for (const char* key : {"account_id", "k", "taps", "refs"}) EXPECT_TRUE(index.contains(key));
  EXPECT_TRUE(index["taps"][0].contains("n_l"));
  EXPECT_TRUE(index["taps"][0].contains("m_l"));

  // sidecar holds upper-triangular float32 per (ref, tap)
  const auto sidecar = salienteye::detail::read_file_bytes(dir / "profile.bin");
  const std::size_t expected_bytes = 6 * ((3 * 4 / 2) + (5 * 6 / 2)) * sizeof(float);
  EXPECT_EQ(sidecar.size(), expected_bytes);

  // saving the loaded profile reproduces both files byte for byte
  save_profile(loaded, dir / "again.json");
  EXPECT_EQ(salienteye::detail::read_file_bytes(dir / "again.bin"), sidecar);
}

TEST(ProfilePersistence, CorruptSidecarFails) {
  TempDir dir("profile");
  const auto profile = engineered_profile("acct", {1.0, 2.0}, 1);
  save_profile(profile, dir / "p.json");
  std::ofstream(dir / "p.bin", std::ios::trunc) << "xx";
  EXPECT_THROW(load_profile(dir / "p.json"), ModelError);
  EXPECT_THROW(load_profile(dir / "missing.json"), ModelError);
}
