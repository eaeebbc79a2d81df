// salienteye-mkfixture — generates a self-contained synthetic workspace:
// a tiny seeded backbone, three texture accounts (stripes / checkerboard
// / noise), a mixed demo account, candidate photos, and ready-to-run
// config files. Lets the whole pipeline run without any external model
// or data.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "salienteye/detail/util.hpp"
#include "salienteye/rng.hpp"
#include "salienteye/synthetic.hpp"

namespace fs = std::filesystem;
using namespace salienteye;

int main(int argc, char** argv) {
  CLI::App app{"salienteye-mkfixture: generate a synthetic demo workspace"};
  std::string out_dir = "fixture";
  std::uint64_t seed = 7;
  int image_size = 48;
  std::size_t texture_count = 40;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "fixture seed");
  app.add_option("--size", image_size, "image edge length in pixels");
  app.add_option("--count", texture_count, "images per texture account");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    const fs::path backbone = synthetic::write_tiny_backbone(dir, image_size, seed);
    std::cout << "backbone: " << backbone.string() << "\n";

    const char* families[] = {"stripes", "checkerboard", "noise"};
    for (int f = 0; f < 3; ++f) {
      const auto manifest = synthetic::write_texture_corpus(
          dir, families[f], static_cast<synthetic::TextureFamily>(f), texture_count,
          seed + 100 + static_cast<std::uint64_t>(f), image_size);
      std::cout << "account: " << manifest.string() << "\n";
    }

    const auto mixed = synthetic::write_mixed_corpus(dir, "demo", 30, seed + 200, image_size);
    std::cout << "account: " << mixed.string() << "\n";

    // a few unseen photos to rank
    fs::create_directories(dir / "candidates");
    Rng rng(seed + 300);
    for (int i = 0; i < 9; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "candidate-%02d.png", i);
      write_png(dir / "candidates" / name,
                synthetic::texture_image(static_cast<synthetic::TextureFamily>(i % 3), image_size,
                                         rng));
    }

    nlohmann::ordered_json run_cfg;
    run_cfg["backbone"] = "backbone.json";
    run_cfg["seed"] = seed;
    run_cfg["window_days"] = 30;
    run_cfg["min_cohort"] = 6;
    run_cfg["style"] = {{"k", 6}, {"n_ref", 20}, {"weights", "depth"}};
    run_cfg["rank"] = {{"mode", "combined"}, {"alpha", 0.5}};
    {
      const std::string text = run_cfg.dump(2) + "\n";
      detail::write_file_bytes(dir / "run_config.json", text.data(), text.size());
    }

    nlohmann::ordered_json eval_cfg = run_cfg;
    eval_cfg["eval"] = {{"manifests", {"stripes.jsonl", "checkerboard.jsonl", "noise.jsonl"}},
                        {"n_ref", 20},
                        {"n_test", 20},
                        {"k", 6}};
    {
      const std::string text = eval_cfg.dump(2) + "\n";
      detail::write_file_bytes(dir / "eval_config.json", text.data(), text.size());
    }

    std::cout << "configs: " << (dir / "run_config.json").string() << ", "
              << (dir / "eval_config.json").string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
