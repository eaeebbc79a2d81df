#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "salienteye/corpus.hpp"
#include "salienteye/detail/util.hpp"
#include "salienteye/error.hpp"
#include "salienteye/onnx/engine.hpp"

namespace salienteye {

// One style tap: a named layer output plus its depth rank (1 = shallowest).
struct StyleTap {
  std::string layer;
  int depth = 0;

  bool operator==(const StyleTap&) const = default;
};

// Activations of one tapped layer: channels x flattened spatial positions,
// channel-major.
struct FeatureMap {
  std::string layer_name;
  int depth_index = 0;
  std::int64_t channels = 0;   // N_l
  std::int64_t positions = 0;  // M_l
  std::vector<float> data;     // channels * positions

  float at(std::int64_t filter, std::int64_t pos) const {
    return data[static_cast<std::size_t>(filter * positions + pos)];
  }
};

// Pooled final-layer vector feeding the engagement head.
struct Embedding {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
};

// ---------------------------------------------------------------------------
// Backbone manifest
// ---------------------------------------------------------------------------

struct BackboneManifest {
  std::filesystem::path model_path;
  PreprocessSpec preprocess;
  std::vector<StyleTap> style_taps;  // strictly increasing depth
  std::string embedding_tap;
  int embedding_dim = 0;
  std::optional<std::int64_t> opset;
  std::string canonical_json;  // exact manifest content, feeds the cache key

  void validate() const {
    preprocess.validate();
    if (style_taps.empty()) throw ValidationError("backbone manifest: style_taps must be non-empty");
    for (std::size_t i = 1; i < style_taps.size(); ++i)
      if (style_taps[i].depth <= style_taps[i - 1].depth)
        throw ValidationError("backbone manifest: style tap depths must be strictly increasing");
    if (embedding_dim <= 0) throw ValidationError("backbone manifest: embedding_dim must be > 0");
    if (embedding_tap.empty()) throw ValidationError("backbone manifest: embedding_tap missing");
  }
};

inline BackboneManifest parse_backbone_manifest(const nlohmann::json& j,
                                                const std::filesystem::path& base_dir) {
  BackboneManifest m;
  try {
    const std::string model_path = j.at("model_path").get<std::string>();
    std::filesystem::path mp(model_path);
    m.model_path = mp.is_absolute() ? mp : base_dir / mp;

    const auto& pp = j.at("preprocess");
    m.preprocess.target_height = pp.at("height").get<int>();
    m.preprocess.target_width = pp.at("width").get<int>();
    const auto means = pp.at("means").get<std::vector<double>>();
    const auto stds = pp.at("stds").get<std::vector<double>>();
    if (means.size() != 3 || stds.size() != 3)
      throw ValidationError("backbone manifest: means/stds must have 3 entries");
    std::copy(means.begin(), means.end(), m.preprocess.channel_means);
    std::copy(stds.begin(), stds.end(), m.preprocess.channel_stds);
    const std::string order = pp.at("channel_order").get<std::string>();
    if (order == "RGB")
      m.preprocess.channel_order = ChannelOrder::RGB;
    else if (order == "BGR")
      m.preprocess.channel_order = ChannelOrder::BGR;
    else
      throw ValidationError("backbone manifest: channel_order must be RGB or BGR");
    const std::string range = pp.at("value_range").get<std::string>();
    if (range == "unit")
      m.preprocess.value_range = ValueRange::Unit;
    else if (range == "symmetric")
      m.preprocess.value_range = ValueRange::Symmetric;
    else
      throw ValidationError("backbone manifest: value_range must be unit or symmetric");

    for (const auto& tap : j.at("style_taps"))
      m.style_taps.push_back({tap.at("layer").get<std::string>(), tap.at("depth").get<int>()});
    m.embedding_tap = j.at("embedding_tap").get<std::string>();
    m.embedding_dim = j.at("embedding_dim").get<int>();
    if (j.contains("opset")) m.opset = j.at("opset").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("backbone manifest: ") + e.what());
  }
  m.canonical_json = j.dump();
  m.validate();
  return m;
}

inline BackboneManifest load_backbone_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read backbone manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("backbone manifest " + path.string() + ": " + e.what());
  }
  return parse_backbone_manifest(j, path.has_parent_path() ? path.parent_path() : ".");
}

// ---------------------------------------------------------------------------
// Backbone handle
// ---------------------------------------------------------------------------

// Frozen feature extractor. Immutable after construction; extraction calls
// are const and safe to run concurrently.
class Backbone {
 public:
  explicit Backbone(BackboneManifest manifest)
      : manifest_(std::move(manifest)), engine_(load_engine(manifest_)) {
    for (const auto& tap : manifest_.style_taps) require_layer(tap.layer);
    require_layer(manifest_.embedding_tap);

    std::uint64_t h = detail::fnv1a(manifest_.canonical_json);
    const auto model_bytes = detail::read_file_bytes(manifest_.model_path);
    h = detail::fnv1a(model_bytes.data(), model_bytes.size(), h);
    cache_key_ = detail::hex64(h);
  }

  const BackboneManifest& manifest() const { return manifest_; }

  // Hash over manifest content and model bytes; names the cache bucket.
  const std::string& cache_key() const { return cache_key_; }

  std::vector<FeatureMap> extract_feature_maps(const ImageTensor& image,
                                               const std::vector<StyleTap>& taps) const {
    check_image(image);
    std::vector<std::string> names;
    names.reserve(taps.size());
    for (const auto& tap : taps) {
      if (std::find(manifest_.style_taps.begin(), manifest_.style_taps.end(), tap) ==
          manifest_.style_taps.end())
        throw ValidationError("tap '" + tap.layer + "' (depth " + std::to_string(tap.depth) +
                              ") is not in the backbone manifest");
      names.push_back(tap.layer);
    }
    auto outputs = engine_.run(to_chw(image), names);
    std::vector<FeatureMap> maps;
    maps.reserve(taps.size());
    for (const auto& tap : taps) maps.push_back(to_feature_map(outputs.at(tap.layer), tap));
    return maps;
  }

  std::vector<FeatureMap> extract_style_maps(const ImageTensor& image) const {
    return extract_feature_maps(image, manifest_.style_taps);
  }

  Embedding extract_embedding(const ImageTensor& image) const {
    check_image(image);
    auto outputs = engine_.run(to_chw(image), {manifest_.embedding_tap});
    return pool_embedding(
        to_feature_map(outputs.at(manifest_.embedding_tap), {manifest_.embedding_tap, 0}));
  }

  struct Extraction {
    std::vector<FeatureMap> style_maps;
    Embedding embedding;
  };

  // One engine pass for both consumers.
  Extraction extract_all(const ImageTensor& image) const {
    check_image(image);
    std::vector<std::string> names;
    for (const auto& tap : manifest_.style_taps) names.push_back(tap.layer);
    names.push_back(manifest_.embedding_tap);
    auto outputs = engine_.run(to_chw(image), names);
    Extraction ex;
    for (const auto& tap : manifest_.style_taps)
      ex.style_maps.push_back(to_feature_map(outputs.at(tap.layer), tap));
    ex.embedding = pool_embedding(
        to_feature_map(outputs.at(manifest_.embedding_tap), {manifest_.embedding_tap, 0}));
    return ex;
  }

 private:
  static onnx::Engine load_engine(const BackboneManifest& manifest) {
    onnx::Model model = onnx::load_model(manifest.model_path);
    if (manifest.opset) {
      const auto actual = model.default_opset();
      if (!actual || *actual != *manifest.opset)
        throw ModelError("backbone opset mismatch: manifest pins " +
                         std::to_string(*manifest.opset) + ", model declares " +
                         (actual ? std::to_string(*actual) : std::string("none")));
    }
    return onnx::Engine(std::move(model));
  }

  void require_layer(const std::string& name) const {
    if (engine_.has_value(name)) return;
    std::string available;
    for (const auto& n : engine_.value_names()) {
      if (!available.empty()) available += ", ";
      available += n;
    }
    throw ModelError("layer '" + name + "' not found in model graph; available layers: " +
                     available);
  }

  void check_image(const ImageTensor& image) const {
    if (image.height != manifest_.preprocess.target_height ||
        image.width != manifest_.preprocess.target_width || image.channels != 3)
      throw ValidationError(
          "image tensor dims (" + std::to_string(image.height) + "x" +
          std::to_string(image.width) + "x" + std::to_string(image.channels) +
          ") do not match the backbone preprocess contract (" +
          std::to_string(manifest_.preprocess.target_height) + "x" +
          std::to_string(manifest_.preprocess.target_width) + "x3)");
  }

  static onnx::Tensor to_chw(const ImageTensor& image) {
    onnx::Tensor t = onnx::Tensor::zeros({1, image.channels, image.height, image.width});
    const std::size_t hw = static_cast<std::size_t>(image.height) * image.width;
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        for (int c = 0; c < image.channels; ++c)
          t.data[static_cast<std::size_t>(c) * hw + static_cast<std::size_t>(y) * image.width + x] =
              image.at(y, x, c);
    return t;
  }

  static FeatureMap to_feature_map(const onnx::Tensor& t, const StyleTap& tap) {
    FeatureMap fm;
    fm.layer_name = tap.layer;
    fm.depth_index = tap.depth;
    if (t.dims.size() == 4 && t.dims[0] == 1) {
      fm.channels = t.dims[1];
      fm.positions = t.dims[2] * t.dims[3];
    } else if (t.dims.size() == 3) {
      fm.channels = t.dims[0];
      fm.positions = t.dims[1] * t.dims[2];
    } else if (t.dims.size() == 2 && t.dims[0] == 1) {
      fm.channels = t.dims[1];
      fm.positions = 1;
    } else {
      throw ModelError("layer '" + tap.layer + "': unsupported output rank " +
                       std::to_string(t.dims.size()));
    }
    fm.data = t.data;  // CHW flattening is already channel-major
    return fm;
  }

  Embedding pool_embedding(const FeatureMap& fm) const {
    Embedding e;
    e.values.resize(static_cast<std::size_t>(fm.channels));
    for (std::int64_t c = 0; c < fm.channels; ++c) {
      double acc = 0.0;
      for (std::int64_t k = 0; k < fm.positions; ++k) acc += fm.at(c, k);
      e.values[static_cast<std::size_t>(c)] =
          static_cast<float>(acc / static_cast<double>(fm.positions));
    }
    if (e.values.size() != static_cast<std::size_t>(manifest_.embedding_dim))
      throw ModelError("embedding tap '" + manifest_.embedding_tap + "' yields " +
                       std::to_string(e.values.size()) + " channels, manifest declares " +
                       std::to_string(manifest_.embedding_dim));
    return e;
  }

  BackboneManifest manifest_;
  onnx::Engine engine_;
  std::string cache_key_;
};

// ---------------------------------------------------------------------------
// On-disk feature cache
// ---------------------------------------------------------------------------

inline std::string hash_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return detail::hex64(detail::fnv1a(bytes.data(), bytes.size()));
}

// Entries live under <dir>/<backbone cache key>/<image hash>_<layer slug>.fm
// as a JSON header line {"layer","n_l","m_l"} followed by a little-endian
// float32 array. Writes go through a temp file + rename so concurrent
// extractions never see torn entries.
class FeatureCache {
 public:
  FeatureCache() = default;  // disabled cache
  FeatureCache(std::filesystem::path dir, std::string backbone_key)
      : dir_(std::move(dir)), backbone_key_(std::move(backbone_key)), enabled_(true) {
    std::filesystem::create_directories(bucket());
  }

  bool enabled() const { return enabled_; }

  std::optional<FeatureMap> load(const std::string& image_hash, const std::string& layer) const {
    if (!enabled_) return std::nullopt;
    std::ifstream in(entry_path(image_hash, layer), std::ios::binary);
    if (!in) return std::nullopt;
    std::string header;
    if (!std::getline(in, header)) return std::nullopt;
    FeatureMap fm;
    try {
      const auto j = nlohmann::json::parse(header);
      fm.layer_name = j.at("layer").get<std::string>();
      fm.channels = j.at("n_l").get<std::int64_t>();
      fm.positions = j.at("m_l").get<std::int64_t>();
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;  // damaged entry, treat as a miss
    }
    fm.data.resize(static_cast<std::size_t>(fm.channels * fm.positions));
    in.read(reinterpret_cast<char*>(fm.data.data()),
            static_cast<std::streamsize>(fm.data.size() * sizeof(float)));
    if (!in) return std::nullopt;
    return fm;
  }

  void store(const std::string& image_hash, const FeatureMap& fm) const {
    if (!enabled_) return;
    nlohmann::json header{{"layer", fm.layer_name}, {"n_l", fm.channels}, {"m_l", fm.positions}};
    std::string blob = header.dump();
    blob += '\n';
    const std::size_t at = blob.size();
    blob.resize(at + fm.data.size() * sizeof(float));
    std::memcpy(blob.data() + at, fm.data.data(), fm.data.size() * sizeof(float));
    detail::write_file_atomic(entry_path(image_hash, fm.layer_name), blob.data(), blob.size());
  }

  std::optional<Embedding> load_embedding(const std::string& image_hash,
                                          const std::string& embedding_tap) const {
    const auto fm = load(image_hash, embedding_tap + "#gap");
    if (!fm) return std::nullopt;
    return Embedding{fm->data};
  }

  void store_embedding(const std::string& image_hash, const std::string& embedding_tap,
                       const Embedding& e) const {
    FeatureMap fm;
    fm.layer_name = embedding_tap + "#gap";
    fm.channels = static_cast<std::int64_t>(e.dim());
    fm.positions = 1;
    fm.data = e.values;
    store(image_hash, fm);
  }

 private:
  std::filesystem::path bucket() const { return dir_ / backbone_key_; }

  std::filesystem::path entry_path(const std::string& image_hash, const std::string& layer) const {
    return bucket() / (image_hash + "_" + detail::hex64(detail::fnv1a(layer)) + ".fm");
  }

  std::filesystem::path dir_;
  std::string backbone_key_;
  bool enabled_ = false;
};

}  // namespace salienteye
