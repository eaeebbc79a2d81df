#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "salienteye/error.hpp"
#include "salienteye/image.hpp"
#include "salienteye/iso8601.hpp"

namespace salienteye {

// One photo record from an account export manifest. `raw` keeps the
// original JSON object so exports can mirror unknown keys.
struct Post {
  std::string post_id;
  std::string account_id;
  std::string image_path;               // as written in the manifest
  std::filesystem::path resolved_path;  // absolute or manifest-dir relative
  UnixSeconds timestamp = 0;
  std::int64_t like_count = 0;
  nlohmann::json raw;
};

struct AccountCorpus {
  std::string account_id;
  std::vector<Post> posts;  // ascending timestamp

  std::size_t size() const { return posts.size(); }
  bool empty() const { return posts.empty(); }

  void sort_by_timestamp() {
    std::stable_sort(posts.begin(), posts.end(),
                     [](const Post& a, const Post& b) { return a.timestamp < b.timestamp; });
  }
};

enum class ChannelOrder { RGB, BGR };
enum class ValueRange { Unit, Symmetric };  // [0,1] or [-1,1]

// Preprocessing contract carried by each backbone manifest. Means/stds are
// indexed in the output channel order.
struct PreprocessSpec {
  int target_height = 224;
  int target_width = 224;
  double channel_means[3] = {0.0, 0.0, 0.0};
  double channel_stds[3] = {1.0, 1.0, 1.0};
  ChannelOrder channel_order = ChannelOrder::RGB;
  ValueRange value_range = ValueRange::Unit;

  void validate() const {
    if (target_height <= 0 || target_width <= 0)
      throw ValidationError("preprocess target dims must be positive");
    for (double s : channel_stds)
      if (!(s > 0.0)) throw ValidationError("preprocess stds must be strictly positive");
  }
};

// Backbone-ready float tensor, row-major (height, width, channel).
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// ---------------------------------------------------------------------------
// Manifest loading (JSON-lines, one post per line)
// ---------------------------------------------------------------------------

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* key,
                                           std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ValidationError("manifest line " + std::to_string(line_no) + ": missing field '" + key +
                          "'");
  return *it;
}

}  // namespace detail

// Parses and validates a JSONL manifest. Posts come back sorted by
// timestamp ascending. Future-dated posts are warned about, not rejected.
inline AccountCorpus load_manifest(const std::filesystem::path& path,
                                   std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read manifest: " + path.string());
  const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : ".";
  const UnixSeconds now = static_cast<UnixSeconds>(std::time(nullptr));

  AccountCorpus corpus;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object())
      throw ValidationError("manifest line " + std::to_string(line_no) + ": not a JSON object");

    Post post;
    const auto& jid = detail::require_field(obj, "post_id", line_no);
    const auto& jacct = detail::require_field(obj, "account_id", line_no);
    const auto& jpath = detail::require_field(obj, "image_path", line_no);
    const auto& jts = detail::require_field(obj, "timestamp", line_no);
    const auto& jlikes = detail::require_field(obj, "like_count", line_no);
    if (!jid.is_string() || !jacct.is_string() || !jpath.is_string())
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": post_id, account_id and image_path must be strings");
    if (!jts.is_string())
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": timestamp must be an ISO-8601 string");
    if (!jlikes.is_number_integer())
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": like_count must be an integer");
    post.post_id = jid.get<std::string>();
    post.account_id = jacct.get<std::string>();
    post.image_path = jpath.get<std::string>();
    post.like_count = jlikes.get<std::int64_t>();
    if (post.like_count < 0)
      throw ValidationError("manifest line " + std::to_string(line_no) + ": negative like_count");
    try {
      post.timestamp = parse_iso8601(jts.get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    std::filesystem::path img(post.image_path);
    post.resolved_path = img.is_absolute() ? img : base / img;
    post.raw = std::move(obj);

    if (corpus.posts.empty()) {
      corpus.account_id = post.account_id;
    } else if (post.account_id != corpus.account_id) {
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": multiple account_id values ('" + corpus.account_id + "' and '" +
                            post.account_id + "')");
    }
    if (!seen_ids.insert(post.post_id).second)
      throw ValidationError("manifest line " + std::to_string(line_no) + ": duplicate post_id '" +
                            post.post_id + "'");
    if (post.timestamp > now && warnings)
      warnings->push_back("post '" + post.post_id + "' is dated in the future (" +
                          format_iso8601(post.timestamp) + ")");
    corpus.posts.push_back(std::move(post));
  }
  corpus.sort_by_timestamp();
  return corpus;
}

// ---------------------------------------------------------------------------
// Image preprocessing
// ---------------------------------------------------------------------------

// Bilinear resample with half-pixel centers, no antialiasing prefilter.
// Double arithmetic internally, float32 out; bit-stable across runs.
inline ImageTensor preprocess_image(const ImageU8& img, const PreprocessSpec& spec) {
  spec.validate();
  if (img.width <= 0 || img.height <= 0) throw ValidationError("zero-area image");

  const int dw = spec.target_width, dh = spec.target_height;
  ImageTensor out;
  out.height = dh;
  out.width = dw;
  out.channels = 3;
  out.data.resize(static_cast<std::size_t>(dh) * dw * 3);

  const double sx_scale = static_cast<double>(img.width) / dw;
  const double sy_scale = static_cast<double>(img.height) / dh;
  const bool bgr = spec.channel_order == ChannelOrder::BGR;
  const bool symmetric = spec.value_range == ValueRange::Symmetric;

  for (int oy = 0; oy < dh; ++oy) {
    double sy = (oy + 0.5) * sy_scale - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - y0;
    for (int ox = 0; ox < dw; ++ox) {
      double sx = (ox + 0.5) * sx_scale - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        const int src_c = bgr ? 2 - c : c;
        auto px = [&](int y, int x) {
          return static_cast<double>(
                     img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + src_c]) /
                 255.0;
        };
        double v = (1.0 - fy) * ((1.0 - fx) * px(y0, x0) + fx * px(y0, x1)) +
                   fy * ((1.0 - fx) * px(y1, x0) + fx * px(y1, x1));
        if (symmetric) v = v * 2.0 - 1.0;
        v = (v - spec.channel_means[c]) / spec.channel_stds[c];
        out.data[(static_cast<std::size_t>(oy) * dw + ox) * 3 + c] = static_cast<float>(v);
      }
    }
  }
  return out;
}

inline ImageTensor load_image(const std::filesystem::path& path, const PreprocessSpec& spec) {
  return preprocess_image(decode_image_file(path), spec);
}

// Partition on the cutoff instant: (< cutoff, >= cutoff). Either side may
// be empty.
inline std::pair<AccountCorpus, AccountCorpus> split_by_date(const AccountCorpus& corpus,
                                                             UnixSeconds cutoff) {
  AccountCorpus train, test;
  train.account_id = corpus.account_id;
  test.account_id = corpus.account_id;
  for (const Post& p : corpus.posts)
    (p.timestamp < cutoff ? train : test).posts.push_back(p);
  return {std::move(train), std::move(test)};
}

}  // namespace salienteye
