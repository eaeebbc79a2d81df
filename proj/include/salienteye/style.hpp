#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "salienteye/detail/util.hpp"
#include "salienteye/error.hpp"
#include "salienteye/features.hpp"

// Gram-matrix style representation. gram() computes G = F * F^T over a
// feature map; layer and total distances follow the normalized squared
// Frobenius form with per-layer depth weights. Profiles hold raw
// (unnormalized) Gram matrices; all normalization lives in
// layer_distance so stored profiles survive bookkeeping changes.

namespace salienteye {

struct GramMatrix {
  std::string layer_name;
  int depth_index = 0;
  std::int64_t n = 0;           // N_l, filters
  std::int64_t m = 0;           // M_l, positions of the source map
  std::vector<double> values;   // n x n, symmetric

  double at(std::int64_t i, std::int64_t j) const {
    return values[static_cast<std::size_t>(i * n + j)];
  }
};

// G[i][j] = sum_k F[i][k] * F[j][k]. 64-bit accumulation; upper triangle
// computed once and mirrored, so symmetry is exact.
inline GramMatrix gram(const FeatureMap& fm) {
  GramMatrix g;
  g.layer_name = fm.layer_name;
  g.depth_index = fm.depth_index;
  g.n = fm.channels;
  g.m = fm.positions;
  g.values.assign(static_cast<std::size_t>(g.n * g.n), 0.0);
  for (std::int64_t i = 0; i < g.n; ++i) {
    const float* fi = fm.data.data() + static_cast<std::size_t>(i * g.m);
    for (std::int64_t j = i; j < g.n; ++j) {
      const float* fj = fm.data.data() + static_cast<std::size_t>(j * g.m);
      double acc = 0.0;
      for (std::int64_t k = 0; k < g.m; ++k)
        acc += static_cast<double>(fi[k]) * static_cast<double>(fj[k]);
      g.values[static_cast<std::size_t>(i * g.n + j)] = acc;
      g.values[static_cast<std::size_t>(j * g.n + i)] = acc;
    }
  }
  return g;
}

// Per-layer term: 1/(4 N_l^2 M_l^2) * sum_{i,j} (Ga_ij - Gb_ij)^2.
inline double layer_distance(const GramMatrix& a, const GramMatrix& b) {
  if (a.layer_name != b.layer_name || a.n != b.n || a.m != b.m)
    throw ValidationError("layer_distance: mismatched layers ('" + a.layer_name + "' " +
                          std::to_string(a.n) + "x" + std::to_string(a.m) + " vs '" +
                          b.layer_name + "' " + std::to_string(b.n) + "x" + std::to_string(b.m) +
                          ")");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  const double n = static_cast<double>(a.n);
  const double m = static_cast<double>(a.m);
  return acc / (4.0 * n * n * m * m);
}

// Depth-keyed layer weights, ordered shallow to deep.
struct WeightedTap {
  std::string layer;
  int depth = 0;
  double weight = 0.0;
};

using LayerWeights = std::vector<WeightedTap>;

// w_l proportional to the tap's depth index, normalized to sum 1; deeper
// layers weigh more.
inline LayerWeights default_weights(const std::vector<StyleTap>& taps) {
  if (taps.empty()) throw ValidationError("default_weights: no taps");
  double total = 0.0;
  for (const auto& tap : taps) total += static_cast<double>(tap.depth);
  LayerWeights weights;
  weights.reserve(taps.size());
  for (const auto& tap : taps)
    weights.push_back({tap.layer, tap.depth, static_cast<double>(tap.depth) / total});
  return weights;
}

namespace detail {

inline void check_tap_alignment(const GramMatrix& g, const WeightedTap& w, const char* what) {
  if (g.layer_name != w.layer)
    throw ValidationError(std::string(what) + ": tap set mismatch ('" + g.layer_name +
                          "' vs '" + w.layer + "')");
}

}  // namespace detail

// Total style difference: sum over taps of w_l * layer_distance, taps
// aligned positionally with the weights.
inline double style_distance(const std::vector<GramMatrix>& a, const std::vector<GramMatrix>& b,
                             const LayerWeights& weights) {
  if (a.size() != b.size() || a.size() != weights.size())
    throw ValidationError("style_distance: tap set size mismatch");
  double total = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    detail::check_tap_alignment(a[l], weights[l], "style_distance");
    detail::check_tap_alignment(b[l], weights[l], "style_distance");
    total += weights[l].weight * layer_distance(a[l], b[l]);
  }
  return total;
}

inline std::vector<GramMatrix> gram_all(const std::vector<FeatureMap>& maps) {
  std::vector<GramMatrix> grams;
  grams.reserve(maps.size());
  for (const auto& fm : maps) grams.push_back(gram(fm));
  return grams;
}

inline double style_distance(const std::vector<FeatureMap>& a, const std::vector<FeatureMap>& b,
                             const LayerWeights& weights) {
  return style_distance(gram_all(a), gram_all(b), weights);
}

// ---------------------------------------------------------------------------
// Style profiles
// ---------------------------------------------------------------------------

// An account's reference Gram sets plus layer weights. Queried with the
// sum of the k smallest per-reference distances (smallest distance =
// greatest similarity).
struct StyleProfile {
  std::string account_id;
  std::size_t k = 30;
  LayerWeights weights;
  std::vector<std::string> ref_ids;
  std::vector<std::vector<GramMatrix>> ref_grams;  // [ref][tap]

  std::size_t n_ref() const { return ref_grams.size(); }

  void validate() const {
    if (ref_grams.empty()) throw DataError("style profile: empty reference set");
    if (k < 1 || k > ref_grams.size())
      throw ValidationError("style profile: k=" + std::to_string(k) + " out of range [1, " +
                            std::to_string(ref_grams.size()) + "]");
    for (const auto& grams : ref_grams) {
      if (grams.size() != weights.size())
        throw ValidationError("style profile: reference tap set mismatch");
      for (std::size_t l = 0; l < grams.size(); ++l) {
        detail::check_tap_alignment(grams[l], weights[l], "style profile");
        if (grams[l].n != ref_grams.front()[l].n || grams[l].m != ref_grams.front()[l].m)
          throw ValidationError("style profile: reference Gram shapes differ at tap '" +
                                weights[l].layer + "'");
      }
    }
  }
};

struct ReferenceEntry {
  std::string id;
  std::vector<GramMatrix> grams;
};

inline StyleProfile build_profile(std::string account_id, std::vector<ReferenceEntry> refs,
                                  std::size_t k, LayerWeights weights) {
  StyleProfile profile;
  profile.account_id = std::move(account_id);
  profile.k = k;
  profile.weights = std::move(weights);
  profile.ref_ids.reserve(refs.size());
  profile.ref_grams.reserve(refs.size());
  for (auto& ref : refs) {
    profile.ref_ids.push_back(std::move(ref.id));
    profile.ref_grams.push_back(std::move(ref.grams));
  }
  profile.validate();
  return profile;
}

// Extracts and grams the references through the backbone; parallel across
// photos, output order fixed by input order.
inline StyleProfile build_profile(const Backbone& backbone, const std::string& account_id,
                                  const std::vector<std::pair<std::string, ImageTensor>>& refs,
                                  std::size_t k, const LayerWeights* weights = nullptr) {
  if (refs.empty()) throw DataError("build_profile: empty reference set");
  std::vector<ReferenceEntry> entries(refs.size());
  detail::parallel_for(refs.size(), [&](std::size_t i) {
    entries[i].id = refs[i].first;
    entries[i].grams = gram_all(backbone.extract_style_maps(refs[i].second));
  });
  return build_profile(account_id, std::move(entries),
                       k, weights ? *weights : default_weights(backbone.manifest().style_taps));
}

// Distances from the photo to every reference, ascending.
inline std::vector<double> reference_distances(const StyleProfile& profile,
                                               const std::vector<GramMatrix>& photo_grams) {
  std::vector<double> dists;
  dists.reserve(profile.n_ref());
  for (const auto& ref : profile.ref_grams)
    dists.push_back(style_distance(photo_grams, ref, profile.weights));
  std::sort(dists.begin(), dists.end());
  return dists;
}

// Sum of the k smallest reference distances.
inline double profile_distance(const StyleProfile& profile,
                               const std::vector<GramMatrix>& photo_grams) {
  profile.validate();
  const auto dists = reference_distances(profile, photo_grams);
  double total = 0.0;
  for (std::size_t i = 0; i < profile.k; ++i) total += dists[i];
  return total;
}

struct AttributionResult {
  std::string predicted_account;
  std::map<std::string, double> scores;  // account -> total distance
};

// Predicted origin = argmin of profile_distance; exact ties go to the
// lexicographically smaller account_id.
inline AttributionResult attribute(const std::vector<GramMatrix>& photo_grams,
                                   const std::vector<StyleProfile>& profiles) {
  if (profiles.size() < 2)
    throw ValidationError("attribute: need at least 2 profiles, got " +
                          std::to_string(profiles.size()));
  for (const auto& profile : profiles) {
    if (profile.k != profiles.front().k)
      throw ValidationError("attribute: profiles disagree on k (" + std::to_string(profile.k) +
                            " vs " + std::to_string(profiles.front().k) + ")");
    if (profile.weights.size() != profiles.front().weights.size())
      throw ValidationError("attribute: profiles disagree on tap sets");
    for (std::size_t l = 0; l < profile.weights.size(); ++l)
      if (profile.weights[l].layer != profiles.front().weights[l].layer)
        throw ValidationError("attribute: profiles disagree on tap sets ('" +
                              profile.weights[l].layer + "' vs '" +
                              profiles.front().weights[l].layer + "')");
  }
  AttributionResult result;
  double best = 0.0;
  for (const auto& profile : profiles) {
    const double d = profile_distance(profile, photo_grams);
    result.scores[profile.account_id] = d;
    if (result.predicted_account.empty() || d < best ||
        (d == best && profile.account_id < result.predicted_account)) {
      result.predicted_account = profile.account_id;
      best = d;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Persistence: JSON index + binary sidecar of upper-triangular float32
// Gram entries per (ref, tap), in index order.
// ---------------------------------------------------------------------------

inline std::filesystem::path profile_sidecar_path(const std::filesystem::path& index_path) {
  std::filesystem::path p = index_path;
  p.replace_extension(".bin");
  return p;
}

inline void save_profile(const StyleProfile& profile, const std::filesystem::path& index_path) {
  profile.validate();
  nlohmann::ordered_json index;
  index["account_id"] = profile.account_id;
  index["k"] = profile.k;
  nlohmann::ordered_json taps = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < profile.weights.size(); ++l) {
    const auto& w = profile.weights[l];
    const auto& g0 = profile.ref_grams.front()[l];
    taps.push_back({{"layer", w.layer},
                    {"depth", w.depth},
                    {"n_l", g0.n},
                    {"m_l", g0.m},
                    {"weight", w.weight}});
  }
  index["taps"] = std::move(taps);
  index["refs"] = profile.ref_ids;
  const std::string text = index.dump(2) + "\n";
  detail::write_file_bytes(index_path, text.data(), text.size());

  std::string blob;
  for (const auto& grams : profile.ref_grams) {
    for (const auto& g : grams) {
      for (std::int64_t i = 0; i < g.n; ++i)
        for (std::int64_t j = i; j < g.n; ++j) {
          const float v = static_cast<float>(g.at(i, j));
          const std::size_t at = blob.size();
          blob.resize(at + sizeof(float));
          std::memcpy(blob.data() + at, &v, sizeof(float));
        }
    }
  }
  detail::write_file_bytes(profile_sidecar_path(index_path), blob.data(), blob.size());
}

inline StyleProfile load_profile(const std::filesystem::path& index_path) {
  std::ifstream in(index_path);
  if (!in) throw ModelError("cannot read style profile: " + index_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("style profile " + index_path.string() + ": " + e.what());
  }
  StyleProfile profile;
  std::vector<std::pair<std::int64_t, std::int64_t>> shapes;  // (n_l, m_l) per tap
  try {
    profile.account_id = j.at("account_id").get<std::string>();
    profile.k = j.at("k").get<std::size_t>();
    for (const auto& tap : j.at("taps")) {
      profile.weights.push_back({tap.at("layer").get<std::string>(), tap.at("depth").get<int>(),
                                 tap.at("weight").get<double>()});
      shapes.emplace_back(tap.at("n_l").get<std::int64_t>(), tap.at("m_l").get<std::int64_t>());
    }
    profile.ref_ids = j.at("refs").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("style profile " + index_path.string() + ": " + e.what());
  }

  const auto blob = detail::read_file_bytes(profile_sidecar_path(index_path));
  std::size_t expected = 0;
  for (const auto& [n, m] : shapes)
    expected += static_cast<std::size_t>(n * (n + 1) / 2);
  expected *= profile.ref_ids.size() * sizeof(float);
  if (blob.size() != expected)
    throw ModelError("style profile sidecar " + profile_sidecar_path(index_path).string() +
                     ": expected " + std::to_string(expected) + " bytes, found " +
                     std::to_string(blob.size()));

  std::size_t offset = 0;
  for (std::size_t r = 0; r < profile.ref_ids.size(); ++r) {
    std::vector<GramMatrix> grams;
    for (std::size_t l = 0; l < profile.weights.size(); ++l) {
      GramMatrix g;
      g.layer_name = profile.weights[l].layer;
      g.depth_index = profile.weights[l].depth;
      g.n = shapes[l].first;
      g.m = shapes[l].second;
      g.values.assign(static_cast<std::size_t>(g.n * g.n), 0.0);
      for (std::int64_t i = 0; i < g.n; ++i)
        for (std::int64_t j2 = i; j2 < g.n; ++j2) {
          float v;
          std::memcpy(&v, blob.data() + offset, sizeof(float));
          offset += sizeof(float);
          g.values[static_cast<std::size_t>(i * g.n + j2)] = v;
          g.values[static_cast<std::size_t>(j2 * g.n + i)] = v;
        }
      grams.push_back(std::move(g));
    }
    profile.ref_grams.push_back(std::move(grams));
  }
  profile.validate();
  return profile;
}

}  // namespace salienteye
