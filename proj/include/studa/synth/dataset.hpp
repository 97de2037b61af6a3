#pragma once

// On-disk dataset layout:
//   <root>/manifest.json
//   <root>/<split>/images/<id>.png   8-bit RGB
//   <root>/<split>/labels/<id>.png   8-bit gray class indices, 255 = ignore

#include <atomic>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "studa/config.hpp"
#include "studa/core/checkpoint.hpp"
#include "studa/core/png_io.hpp"
#include "studa/synth/render.hpp"

namespace studa::synth {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;
// Split whose labels are withheld from every trainer.
inline constexpr const char* kWithheldSplit = "target-train";

// ---- leak guard -------------------------------------------------------------

namespace detail {
inline std::atomic<int>& active_trainers() {
  static std::atomic<int> n{0};
  return n;
}
inline std::atomic<long>& withheld_reads() {
  static std::atomic<long> n{0};
  return n;
}
}  // namespace detail

// Held by every training stage for its whole duration. Reading withheld
// labels while any scope is alive raises LeakError.
class TrainingScope {
 public:
  TrainingScope() { ++detail::active_trainers(); }
  ~TrainingScope() { --detail::active_trainers(); }
  TrainingScope(const TrainingScope&) = delete;
  TrainingScope& operator=(const TrainingScope&) = delete;
  static int active() { return detail::active_trainers().load(); }
};

// Number of successful withheld-label reads since process start.
inline long withheld_label_reads() { return detail::withheld_reads().load(); }

// ---- generation ---------------------------------------------------------------

inline std::string image_id(const std::string& split, std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08llu", static_cast<unsigned long long>(seed));
  return split + "_" + buf;
}

inline LabeledImage render_split_item(const GeneratorConfig& cfg, const GeneratorConfig::Split& split,
                                      std::uint64_t seed) {
  const SceneLayout layout = generate_layout(seed, cfg);
  const StyleParams style = split.domain == Domain::source ? source_style()
                                                           : sample_target_style(seed ^ cfg.style_seed_offset, cfg);
  LabeledImage im = render(layout, split.domain, style, cfg.texture_amplitude);
  im.id = image_id(split.name, seed);
  return im;
}

struct DatasetManifest {
  nlohmann::json json;
  int count(const std::string& split) const { return json.at("splits").at(split).at("count").get<int>(); }
};

inline void write_item(const fs::path& split_dir, const LabeledImage& im) {
  png::write(split_dir / "images" / (im.id + ".png"), png::Image8{im.height, im.width, 3, im.rgb});
  png::write(split_dir / "labels" / (im.id + ".png"), png::Image8{im.height, im.width, 1, im.labels});
}

inline DatasetManifest generate_dataset(const GeneratorConfig& cfg, const fs::path& root) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error("cannot create " + root.string() + ": " + ec.message());
  nlohmann::json manifest;
  manifest["format_version"] = kManifestVersion;
  manifest["config"] = cfg;
  manifest["config_hash"] = json_hash(nlohmann::json(cfg));
  manifest["class_names"] = kClassNames;
  manifest["ignore_index"] = kIgnoreLabel;
  manifest["height"] = cfg.height;
  manifest["width"] = cfg.width;
  for (const auto& split : cfg.splits) {
    const fs::path dir = root / split.name;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "labels");
    nlohmann::json files = nlohmann::json::object();
    for (int i = 0; i < split.count; ++i) {
      const auto im = render_split_item(cfg, split, split.seed_begin + i);
      write_item(dir, im);
      files[im.id] = {{"image", file_hash(dir / "images" / (im.id + ".png"))},
                      {"label", file_hash(dir / "labels" / (im.id + ".png"))}};
    }
    manifest["splits"][split.name] = {{"count", split.count},
                                      {"seed_begin", split.seed_begin},
                                      {"seed_end", split.seed_begin + split.count},
                                      {"domain", domain_name(split.domain)},
                                      {"files", files}};
  }
  // Manifest last: its presence marks a complete dataset.
  const auto tmp = root / "manifest.json.tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw Error("cannot write manifest in " + root.string());
    f << manifest.dump(2) << '\n';
  }
  fs::rename(tmp, root / "manifest.json");
  return DatasetManifest{manifest};
}

inline DatasetManifest read_manifest(const fs::path& root) {
  std::ifstream f(root / "manifest.json");
  if (!f) throw DatasetIntegrityError("manifest.json missing in " + root.string());
  try {
    DatasetManifest m{nlohmann::json::parse(f)};
    if (m.json.at("format_version").get<int>() != kManifestVersion)
      throw DatasetIntegrityError("unsupported manifest version");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetIntegrityError(std::string("manifest.json unreadable: ") + e.what());
  }
}

// ---- loading -----------------------------------------------------------------

namespace detail {

inline LabeledImage read_item(const fs::path& split_dir, const std::string& id, Domain domain, int height, int width,
                              bool with_labels, const nlohmann::json* checksums) {
  const fs::path ip = split_dir / "images" / (id + ".png");
  const fs::path lp = split_dir / "labels" / (id + ".png");
  if (!fs::exists(ip)) throw DatasetIntegrityError("missing file " + ip.string());
  if (checksums && file_hash(ip) != checksums->at("image").get<std::string>())
    throw DatasetIntegrityError("checksum mismatch for " + ip.string());
  auto img = png::read(ip, 3);
  if (img.height != height || img.width != width) throw DatasetIntegrityError("unexpected size of " + ip.string());
  LabeledImage im;
  im.id = id;
  im.domain = domain;
  im.height = height;
  im.width = width;
  im.rgb = std::move(img.data);
  if (with_labels) {
    if (!fs::exists(lp)) throw DatasetIntegrityError("missing file " + lp.string());
    if (checksums && file_hash(lp) != checksums->at("label").get<std::string>())
      throw DatasetIntegrityError("checksum mismatch for " + lp.string());
    auto lab = png::read(lp, 1);
    if (lab.height != height || lab.width != width) throw DatasetIntegrityError("unexpected size of " + lp.string());
    for (auto v : lab.data)
      if (v >= kNumClasses && v != kIgnoreLabel)
        throw DatasetIntegrityError("label value " + std::to_string(v) + " out of range in " + lp.string());
    im.labels = std::move(lab.data);
  }
  return im;
}

inline std::vector<LabeledImage> load_split(const fs::path& root, const std::string& split, bool with_labels,
                                            bool verify_checksums) {
  const auto m = read_manifest(root);
  if (!m.json.at("splits").contains(split)) throw DatasetIntegrityError("split " + split + " not in manifest");
  const auto& s = m.json.at("splits").at(split);
  const Domain domain = s.at("domain").get<std::string>() == "source" ? Domain::source : Domain::target;
  const auto& files = s.at("files");
  if (static_cast<int>(files.size()) != s.at("count").get<int>())
    throw DatasetIntegrityError("manifest count mismatch for " + split);
  std::vector<std::string> ids;
  for (auto it = files.begin(); it != files.end(); ++it) ids.push_back(it.key());
  std::sort(ids.begin(), ids.end());
  const int H = m.json.at("height").get<int>(), W = m.json.at("width").get<int>();
  std::vector<LabeledImage> out;
  out.reserve(ids.size());
  for (const auto& id : ids)
    out.push_back(read_item(root / split, id, domain, H, W, with_labels, verify_checksums ? &files.at(id) : nullptr));
  return out;
}

}  // namespace detail

// Ordered by id. Labels of the withheld split are never returned here.
inline std::vector<LabeledImage> load_dataset(const fs::path& root, const std::string& split,
                                              bool verify_checksums = true) {
  return detail::load_split(root, split, split != kWithheldSplit, verify_checksums);
}

// Ground truth of the withheld split, for evaluation only. Throws LeakError
// while any TrainingScope is alive.
inline std::vector<LabeledImage> load_withheld_labels(const fs::path& root, const std::string& split = kWithheldSplit,
                                                      bool verify_checksums = true) {
  if (TrainingScope::active() > 0)
    throw LeakError("attempt to read " + split + " labels while a training stage is running");
  auto out = detail::load_split(root, split, true, verify_checksums);
  ++detail::withheld_reads();
  return out;
}

// Reader for a Cityscapes-style directory: <dir>/images/*.png with matching
// <dir>/labels/*.png index maps (labels optional).
inline std::vector<LabeledImage> load_directory(const fs::path& dir, Domain domain = Domain::target) {
  if (!fs::is_directory(dir / "images")) throw DatasetIntegrityError("no images/ directory in " + dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir / "images"))
    if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());
  std::vector<LabeledImage> out;
  for (const auto& id : ids) {
    auto img = png::read(dir / "images" / (id + ".png"), 3);
    const bool has_label = fs::exists(dir / "labels" / (id + ".png"));
    out.push_back(detail::read_item(dir, id, domain, img.height, img.width, has_label, nullptr));
  }
  return out;
}

}  // namespace studa::synth
