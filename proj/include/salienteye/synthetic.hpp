#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "salienteye/detail/util.hpp"
#include "salienteye/image.hpp"
#include "salienteye/iso8601.hpp"
#include "salienteye/onnx/model.hpp"
#include "salienteye/rng.hpp"

// Synthetic fixtures: procedural texture corpora with distinct
// second-order statistics (stripes / checkerboard / noise), and a tiny
// seeded convolutional backbone. These drive the desk-scale analogs of
// the engagement and attribution experiments without external data.

namespace salienteye::synthetic {

enum class TextureFamily { Stripes, Checkerboard, Noise };

inline const char* to_string(TextureFamily f) {
  switch (f) {
    case TextureFamily::Stripes: return "stripes";
    case TextureFamily::Checkerboard: return "checkerboard";
    default: return "noise";
  }
}

// Sinusoidal stripes around a consistent orientation (a coherent "account
// style"), with jittered angle, period and phase.
inline ImageU8 stripes_image(int size, Rng& rng) {
  ImageU8 img;
  img.width = img.height = size;
  img.rgb.resize(static_cast<std::size_t>(size) * size * 3);
  const double angle = M_PI / 6.0 + rng.uniform(-0.35, 0.35);
  const double period = rng.uniform(7.0, 13.0);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  const double cx = std::cos(angle), sy = std::sin(angle);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double v = 0.5 + 0.45 * std::sin(2.0 * M_PI * (x * cx + y * sy) / period + phase);
      const auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
      const std::size_t at = (static_cast<std::size_t>(y) * size + x) * 3;
      img.rgb[at] = img.rgb[at + 1] = img.rgb[at + 2] = byte;
    }
  return img;
}

// Axis-aligned checkerboard with random cell size and offset.
inline ImageU8 checkerboard_image(int size, Rng& rng) {
  ImageU8 img;
  img.width = img.height = size;
  img.rgb.resize(static_cast<std::size_t>(size) * size * 3);
  const int cell = 3 + static_cast<int>(rng.below(5));  // 3..7 px
  const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(cell)));
  const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(cell)));
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const bool on = (((x + ox) / cell) + ((y + oy) / cell)) % 2 == 0;
      const unsigned char byte = on ? 230 : 25;
      const std::size_t at = (static_cast<std::size_t>(y) * size + x) * 3;
      img.rgb[at] = img.rgb[at + 1] = img.rgb[at + 2] = byte;
    }
  return img;
}

// Per-pixel iid uniform noise, independent per channel.
inline ImageU8 noise_image(int size, Rng& rng) {
  ImageU8 img;
  img.width = img.height = size;
  img.rgb.resize(static_cast<std::size_t>(size) * size * 3);
  for (auto& byte : img.rgb) byte = static_cast<unsigned char>(rng.below(256));
  return img;
}

inline ImageU8 texture_image(TextureFamily family, int size, Rng& rng) {
  switch (family) {
    case TextureFamily::Stripes: return stripes_image(size, rng);
    case TextureFamily::Checkerboard: return checkerboard_image(size, rng);
    default: return noise_image(size, rng);
  }
}

// ---------------------------------------------------------------------------
// Tiny fixture backbone
// ---------------------------------------------------------------------------

// conv1: eight fixed 3x3 kernels (oriented edges, blur, laplacian,
// identity, checker detector) applied to the RGB mean -> relu ("feat1").
// conv2: eight seeded random 3x3 kernels, stride 2 -> relu ("feat2").
// Style taps feat1/feat2, embedding = GAP(feat2), D = 8.
inline onnx::Model tiny_backbone_model(std::uint64_t seed) {
  using onnx::Attribute;
  using onnx::Node;
  using onnx::TensorData;

  static const double kKernels[8][3][3] = {
      {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}},        // horizontal edge
      {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}},        // vertical edge
      {{0, 1, 2}, {-1, 0, 1}, {-2, -1, 0}},        // diagonal edge
      {{2, 1, 0}, {1, 0, -1}, {0, -1, -2}},        // anti-diagonal edge
      {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}},           // blur (x1/9)
      {{0, -1, 0}, {-1, 4, -1}, {0, -1, 0}},       // laplacian
      {{0, 0, 0}, {0, 1, 0}, {0, 0, 0}},           // identity
      {{1, -1, 1}, {-1, 1, -1}, {1, -1, 1}},       // checker detector
  };

  TensorData w1;
  w1.name = "w1";
  w1.dims = {8, 3, 3, 3};
  w1.floats.reserve(8 * 3 * 3 * 3);
  for (int oc = 0; oc < 8; ++oc) {
    const double scale = oc == 4 ? 1.0 / 9.0 : 1.0;
    for (int ic = 0; ic < 3; ++ic)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          w1.floats.push_back(static_cast<float>(kKernels[oc][ky][kx] * scale / 3.0));
  }

  Rng rng(seed);
  TensorData w2;
  w2.name = "w2";
  w2.dims = {8, 8, 3, 3};
  w2.floats.reserve(8 * 8 * 3 * 3);
  for (std::size_t i = 0; i < 8 * 8 * 3 * 3; ++i)
    w2.floats.push_back(static_cast<float>(rng.uniform(-0.3, 0.3)));

  Node conv1;
  conv1.name = "conv1";
  conv1.op_type = "Conv";
  conv1.inputs = {"input", "w1"};
  conv1.outputs = {"conv1_out"};
  conv1.attributes.push_back({"strides", Attribute::kAttrInts, 0.f, 0, "", {}, {1, 1}});
  Node relu1;
  relu1.name = "relu1";
  relu1.op_type = "Relu";
  relu1.inputs = {"conv1_out"};
  relu1.outputs = {"feat1"};
  Node conv2;
  conv2.name = "conv2";
  conv2.op_type = "Conv";
  conv2.inputs = {"feat1", "w2"};
  conv2.outputs = {"conv2_out"};
  conv2.attributes.push_back({"strides", Attribute::kAttrInts, 0.f, 0, "", {}, {2, 2}});
  Node relu2;
  relu2.name = "relu2";
  relu2.op_type = "Relu";
  relu2.inputs = {"conv2_out"};
  relu2.outputs = {"feat2"};

  onnx::Model model;
  model.ir_version = 7;
  model.opset_imports = {{"", 13}};
  model.graph.name = "salienteye_fixture";
  model.graph.nodes = {conv1, relu1, conv2, relu2};
  model.graph.initializers = {w1, w2};
  model.graph.inputs.push_back({"input", onnx::kFloat, {1, 3, -1, -1}});
  model.graph.outputs.push_back({"feat2", onnx::kFloat, {}});
  return model;
}

// Writes backbone.onnx + backbone.json into dir; returns the manifest path.
inline std::filesystem::path write_tiny_backbone(const std::filesystem::path& dir,
                                                 int image_size = 48, std::uint64_t seed = 7) {
  std::filesystem::create_directories(dir);
  const auto model_path = dir / "backbone.onnx";
  onnx::save_model(tiny_backbone_model(seed), model_path);

  nlohmann::ordered_json manifest;
  manifest["model_path"] = "backbone.onnx";
  manifest["opset"] = 13;
  manifest["preprocess"] = {{"height", image_size},
                            {"width", image_size},
                            {"means", {0.5, 0.5, 0.5}},
                            {"stds", {0.5, 0.5, 0.5}},
                            {"channel_order", "RGB"},
                            {"value_range", "unit"}};
  manifest["style_taps"] = {{{"layer", "feat1"}, {"depth", 1}},
                            {{"layer", "feat2"}, {"depth", 2}}};
  manifest["embedding_tap"] = "feat2";
  manifest["embedding_dim"] = 8;
  const auto manifest_path = dir / "backbone.json";
  const std::string text = manifest.dump(2) + "\n";
  detail::write_file_bytes(manifest_path, text.data(), text.size());
  return manifest_path;
}

// ---------------------------------------------------------------------------
// Synthetic account corpora
// ---------------------------------------------------------------------------

inline constexpr UnixSeconds kFixtureEpoch = 1609502400;  // 2021-01-01T12:00:00Z

// Single-family account: `count` texture PNGs posted daily, like counts
// 10 + i. Returns the manifest path.
inline std::filesystem::path write_texture_corpus(const std::filesystem::path& dir,
                                                  const std::string& account_id,
                                                  TextureFamily family, std::size_t count,
                                                  std::uint64_t seed, int image_size = 48) {
  std::filesystem::create_directories(dir / account_id);
  Rng rng(seed);
  std::ofstream manifest(dir / (account_id + ".jsonl"));
  if (!manifest) throw ValidationError("cannot write fixture manifest in " + dir.string());
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%s-%03zu", account_id.c_str(), i);
    const std::string rel = account_id + "/" + name + ".png";
    write_png(dir / rel, texture_image(family, image_size, rng));
    nlohmann::json line{{"post_id", name},
                        {"account_id", account_id},
                        {"image_path", rel},
                        {"timestamp", format_iso8601(kFixtureEpoch +
                                                     static_cast<UnixSeconds>(i) * 86400)},
                        {"like_count", 10 + static_cast<std::int64_t>(i)}};
    manifest << line.dump() << "\n";
  }
  return dir / (account_id + ".jsonl");
}

// Mixed account for end-to-end runs: stripes / checkerboard / noise
// interleaved daily, with like counts tied to the family (stripes post
// well, noise posts poorly) so tertile labeling yields both classes.
inline std::filesystem::path write_mixed_corpus(const std::filesystem::path& dir,
                                                const std::string& account_id, std::size_t count,
                                                std::uint64_t seed, int image_size = 48) {
  std::filesystem::create_directories(dir / account_id);
  Rng rng(seed);
  std::ofstream manifest(dir / (account_id + ".jsonl"));
  if (!manifest) throw ValidationError("cannot write fixture manifest in " + dir.string());
  for (std::size_t i = 0; i < count; ++i) {
    const TextureFamily family = static_cast<TextureFamily>(i % 3);
    std::int64_t likes = 0;
    switch (family) {
      case TextureFamily::Stripes: likes = 150 + static_cast<std::int64_t>(rng.below(50)); break;
      case TextureFamily::Checkerboard: likes = 70 + static_cast<std::int64_t>(rng.below(30)); break;
      case TextureFamily::Noise: likes = 5 + static_cast<std::int64_t>(rng.below(25)); break;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "%s-%03zu", account_id.c_str(), i);
    const std::string rel = account_id + "/" + name + ".png";
    write_png(dir / rel, texture_image(family, image_size, rng));
    nlohmann::json line{{"post_id", name},
                        {"account_id", account_id},
                        {"image_path", rel},
                        {"timestamp", format_iso8601(kFixtureEpoch +
                                                     static_cast<UnixSeconds>(i) * 86400)},
                        {"like_count", likes}};
    manifest << line.dump() << "\n";
  }
  return dir / (account_id + ".jsonl");
}

}  // namespace salienteye::synthetic
