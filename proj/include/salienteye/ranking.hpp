#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "salienteye/detail/util.hpp"
#include "salienteye/engagement.hpp"
#include "salienteye/error.hpp"
#include "salienteye/style.hpp"
#include "salienteye/version.hpp"

namespace salienteye {

// A scored new photo: engagement probability plus style distance from the
// account profile, with style_dist min-max normalized within the batch
// (all zeros when the batch min equals the max).
struct Candidate {
  std::string id;
  std::filesystem::path source_path;  // optional, feeds report thumbnails
  double p_high = 0.0;
  double style_dist = 0.0;
  double style_norm = 0.0;
};

enum class RankMode { Engagement, Style, Combined, Pareto };

inline const char* to_string(RankMode m) {
  switch (m) {
    case RankMode::Engagement: return "engagement";
    case RankMode::Style: return "style";
    case RankMode::Combined: return "combined";
    default: return "pareto";
  }
}

inline RankMode rank_mode_from_string(const std::string& s) {
  if (s == "engagement") return RankMode::Engagement;
  if (s == "style") return RankMode::Style;
  if (s == "combined") return RankMode::Combined;
  if (s == "pareto") return RankMode::Pareto;
  throw ValidationError("unknown ranking mode: '" + s + "'");
}

struct RankedList {
  RankMode mode = RankMode::Combined;
  double alpha = 0.5;
  std::vector<Candidate> candidates;
};

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

inline void min_max_normalize(std::vector<Candidate>& candidates) {
  if (candidates.empty()) return;
  double lo = candidates[0].style_dist, hi = candidates[0].style_dist;
  for (const auto& c : candidates) {
    lo = std::min(lo, c.style_dist);
    hi = std::max(hi, c.style_dist);
  }
  for (auto& c : candidates)
    c.style_norm = hi > lo ? (c.style_dist - lo) / (hi - lo) : 0.0;
}

// Runs the backbone once per photo and fills both axes. The head and
// profile must come from the same backbone family.
inline std::vector<Candidate> score_batch(
    const HeadParams& head, const StyleProfile& profile, const Backbone& backbone,
    const std::vector<std::pair<std::string, ImageTensor>>& photos) {
  if (photos.empty()) throw ValidationError("score_batch: empty batch");
  if (head.embedding_dim != backbone.manifest().embedding_dim)
    throw ModelError("score_batch: head embedding dim " + std::to_string(head.embedding_dim) +
                     " does not match backbone embedding dim " +
                     std::to_string(backbone.manifest().embedding_dim));
  const auto& taps = backbone.manifest().style_taps;
  if (profile.weights.size() != taps.size())
    throw ModelError("score_batch: profile tap set does not match backbone style taps");
  for (std::size_t l = 0; l < taps.size(); ++l)
    if (profile.weights[l].layer != taps[l].layer)
      throw ModelError("score_batch: profile tap '" + profile.weights[l].layer +
                       "' does not match backbone tap '" + taps[l].layer + "'");

  std::vector<Candidate> candidates(photos.size());
  detail::parallel_for(photos.size(), [&](std::size_t i) {
    const auto extraction = backbone.extract_all(photos[i].second);
    Candidate c;
    c.id = photos[i].first;
    c.p_high = static_cast<double>(
        forward(head, std::span<const float>(extraction.embedding.values)).probs.p_high);
    c.style_dist = profile_distance(profile, gram_all(extraction.style_maps));
    candidates[i] = std::move(c);
  });
  min_max_normalize(candidates);
  return candidates;
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

// b beats a on both axes: strictly higher engagement AND strictly lower
// style distance.
inline bool dominates(const Candidate& b, const Candidate& a) {
  return b.p_high > a.p_high && b.style_dist < a.style_dist;
}

inline double combined_score(const Candidate& c, double alpha) {
  return alpha * c.p_high + (1.0 - alpha) * (1.0 - c.style_norm);
}

// Sorts per mode; exact ties keep input order. Pareto mode keeps only
// non-dominated candidates, ordered by p_high descending.
inline RankedList rank(std::vector<Candidate> candidates, RankMode mode, double alpha = 0.5) {
  if (candidates.empty()) throw ValidationError("rank: no candidates");
  if (alpha < 0.0 || alpha > 1.0)
    throw ValidationError("rank: alpha must be in [0,1], got " + std::to_string(alpha));
  RankedList out;
  out.mode = mode;
  out.alpha = alpha;
  switch (mode) {
    case RankMode::Engagement:
      std::stable_sort(candidates.begin(), candidates.end(),
                       [](const Candidate& a, const Candidate& b) { return a.p_high > b.p_high; });
      break;
    case RankMode::Style:
      std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return a.style_dist < b.style_dist;
      });
      break;
    case RankMode::Combined:
      std::stable_sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
        return combined_score(a, alpha) > combined_score(b, alpha);
      });
      break;
    case RankMode::Pareto: {
      std::vector<Candidate> front;
      for (const auto& c : candidates) {
        const bool dominated = std::any_of(candidates.begin(), candidates.end(),
                                           [&](const Candidate& other) { return dominates(other, c); });
        if (!dominated) front.push_back(c);
      }
      std::stable_sort(front.begin(), front.end(),
                       [](const Candidate& a, const Candidate& b) { return a.p_high > b.p_high; });
      candidates = std::move(front);
      break;
    }
  }
  out.candidates = std::move(candidates);
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json report_json(const RankedList& ranked,
                                          const nlohmann::ordered_json& config_echo) {
  nlohmann::ordered_json j;
  j["version"] = version();
  j["mode"] = to_string(ranked.mode);
  j["alpha"] = ranked.alpha;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ranked.candidates.size(); ++i) {
    const auto& c = ranked.candidates[i];
    arr.push_back({{"id", c.id},
                   {"p_high", c.p_high},
                   {"style_dist", c.style_dist},
                   {"style_norm", c.style_norm},
                   {"rank", i + 1}});
  }
  j["candidates"] = std::move(arr);
  j["config"] = config_echo;
  return j;
}

namespace detail {

inline std::string html_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string thumbnail_data_uri(const std::filesystem::path& path) {
  if (path.empty() || !std::filesystem::exists(path)) return {};
  const auto bytes = read_file_bytes(path);
  const char* mime = "image/png";
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8) mime = "image/jpeg";
  return std::string("data:") + mime + ";base64," + base64_encode(bytes.data(), bytes.size());
}

}  // namespace detail

// Single-file gallery: inlined base64 thumbnails with score badges,
// sorted per ranking.
inline std::string report_html(const RankedList& ranked) {
  std::string html;
  html += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n";
  html += "<title>salienteye ranking</title>\n<style>\n";
  html += "body{font-family:sans-serif;background:#14151a;color:#eee;margin:2em}\n";
  html += ".grid{display:flex;flex-wrap:wrap;gap:16px}\n";
  html += ".card{background:#23242b;border-radius:8px;padding:12px;width:240px}\n";
  html += ".card img{width:100%;border-radius:4px;display:block}\n";
  html += ".badge{font-size:13px;margin-top:8px}\n";
  html += ".rank{color:#f7b733;font-weight:bold}\n";
  html += "</style>\n</head>\n<body>\n";
  html += "<h1>salienteye ranking</h1>\n";
  html += "<p>mode: " + std::string(to_string(ranked.mode));
  if (ranked.mode == RankMode::Combined)
    html += " (alpha " + nlohmann::json(ranked.alpha).dump() + ")";
  html += " &middot; " + std::to_string(ranked.candidates.size()) + " photos</p>\n";
  html += "<div class=\"grid\">\n";
  for (std::size_t i = 0; i < ranked.candidates.size(); ++i) {
    const auto& c = ranked.candidates[i];
    html += "<div class=\"card\">";
    const std::string uri = detail::thumbnail_data_uri(c.source_path);
    if (!uri.empty())
      html += "<img src=\"" + uri + "\" alt=\"" + detail::html_escape(c.id) + "\">";
    html += "<div class=\"badge\"><span class=\"rank\">#" + std::to_string(i + 1) + "</span> " +
            detail::html_escape(c.id) + "</div>";
    html += "<div class=\"badge\">p_high " + nlohmann::json(c.p_high).dump() + "</div>";
    html += "<div class=\"badge\">style_dist " + nlohmann::json(c.style_dist).dump() + "</div>";
    html += "</div>\n";
  }
  html += "</div>\n</body>\n</html>\n";
  return html;
}

// Writes report.json and report.html; byte-identical given identical
// inputs.
inline void emit_report(const RankedList& ranked, const std::filesystem::path& out_dir,
                        const nlohmann::ordered_json& config_echo) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir))
    throw ValidationError("emit_report: cannot create output directory " + out_dir.string());
  const std::string json_text = report_json(ranked, config_echo).dump(2) + "\n";
  detail::write_file_bytes(out_dir / "report.json", json_text.data(), json_text.size());
  const std::string html_text = report_html(ranked);
  detail::write_file_bytes(out_dir / "report.html", html_text.data(), html_text.size());
}

}  // namespace salienteye
