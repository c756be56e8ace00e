#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridloc/error.hpp"
#include "gridloc/grid.hpp"
#include "gridloc/png_io.hpp"

namespace gridloc {

// ---------------------------------------------------------------------------
// Pathologies

/// The nine localizable finding classes. Support Devices is recognized at
/// ingestion but always skipped: this harness scores pathology localization
/// only.
enum class Pathology {
  Atelectasis,
  Cardiomegaly,
  Consolidation,
  Edema,
  EnlargedCardiomediastinum,
  LungLesion,
  LungOpacity,
  PleuralEffusion,
  Pneumothorax,
};

inline constexpr std::array<Pathology, 9> kAllPathologies = {
    Pathology::Atelectasis,     Pathology::Cardiomegaly,
    Pathology::Consolidation,   Pathology::Edema,
    Pathology::EnlargedCardiomediastinum,
    Pathology::LungLesion,      Pathology::LungOpacity,
    Pathology::PleuralEffusion, Pathology::Pneumothorax,
};

/// Human-readable name, as used in prompts and report tables.
inline const char* display_name(Pathology p) {
  switch (p) {
    case Pathology::Atelectasis: return "Atelectasis";
    case Pathology::Cardiomegaly: return "Cardiomegaly";
    case Pathology::Consolidation: return "Consolidation";
    case Pathology::Edema: return "Edema";
    case Pathology::EnlargedCardiomediastinum: return "Enlarged Cardiomediastinum";
    case Pathology::LungLesion: return "Lung Lesion";
    case Pathology::LungOpacity: return "Lung Opacity";
    case Pathology::PleuralEffusion: return "Pleural Effusion";
    case Pathology::Pneumothorax: return "Pneumothorax";
  }
  throw Error("unknown pathology value");
}

/// Filesystem- and key-safe name (no spaces).
inline const char* slug(Pathology p) {
  switch (p) {
    case Pathology::Atelectasis: return "Atelectasis";
    case Pathology::Cardiomegaly: return "Cardiomegaly";
    case Pathology::Consolidation: return "Consolidation";
    case Pathology::Edema: return "Edema";
    case Pathology::EnlargedCardiomediastinum: return "EnlargedCardiomediastinum";
    case Pathology::LungLesion: return "LungLesion";
    case Pathology::LungOpacity: return "LungOpacity";
    case Pathology::PleuralEffusion: return "PleuralEffusion";
    case Pathology::Pneumothorax: return "Pneumothorax";
  }
  throw Error("unknown pathology value");
}

namespace detail {
inline std::string fold_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' || c == '_' || c == '-') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}
}  // namespace detail

/// Accepts spaced, underscored, and case-folded spellings.
inline std::optional<Pathology> parse_pathology(std::string_view name) {
  const std::string key = detail::fold_name(name);
  for (Pathology p : kAllPathologies) {
    if (key == detail::fold_name(display_name(p))) return p;
  }
  return std::nullopt;
}

inline bool is_support_devices(std::string_view name) {
  return detail::fold_name(name) == "supportdevices";
}

// ---------------------------------------------------------------------------
// View position and split

struct ViewPosition {
  enum class Kind { frontal, lateral };
  enum class FrontalSubtype { ap, pa, unknown };

  Kind kind = Kind::frontal;
  FrontalSubtype subtype = FrontalSubtype::unknown;

  /// The word substituted into prompts: "frontal" or "lateral".
  const char* word() const {
    return kind == Kind::frontal ? "frontal" : "lateral";
  }
  bool frontal() const { return kind == Kind::frontal; }
  auto operator<=>(const ViewPosition&) const = default;
};

inline ViewPosition parse_view(std::string_view s) {
  const std::string key = detail::fold_name(s);
  if (key == "frontal") return {ViewPosition::Kind::frontal, ViewPosition::FrontalSubtype::unknown};
  if (key == "ap") return {ViewPosition::Kind::frontal, ViewPosition::FrontalSubtype::ap};
  if (key == "pa") return {ViewPosition::Kind::frontal, ViewPosition::FrontalSubtype::pa};
  if (key == "lateral") return {ViewPosition::Kind::lateral, ViewPosition::FrontalSubtype::unknown};
  throw Error("unknown view position: " + std::string(s));
}

inline const char* view_string(const ViewPosition& v) {
  if (v.kind == ViewPosition::Kind::lateral) return "lateral";
  switch (v.subtype) {
    case ViewPosition::FrontalSubtype::ap: return "ap";
    case ViewPosition::FrontalSubtype::pa: return "pa";
    default: return "frontal";
  }
}

enum class Split { validation, test };

inline Split parse_split(std::string_view s) {
  const std::string key = detail::fold_name(s);
  if (key == "validation" || key == "val" || key == "valid") return Split::validation;
  if (key == "test") return Split::test;
  throw Error("unknown split: " + std::string(s));
}

inline const char* split_string(Split s) {
  return s == Split::test ? "test" : "validation";
}

// ---------------------------------------------------------------------------
// Masks

/// Pixel mask in row-major order; one byte per pixel, nonzero = foreground.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h) {
    if (w < 1 || h < 1) throw Error("invalid mask shape");
    bits.assign(static_cast<std::size_t>(w) * h, 0);
  }

  std::uint8_t at(int x, int y) const {
    return bits[static_cast<std::size_t>(y) * width + x];
  }
  void set(int x, int y, bool v = true) {
    bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
  std::size_t foreground_count() const {
    return static_cast<std::size_t>(
        std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
  }
  bool empty_mask() const { return foreground_count() == 0; }
  bool operator==(const BinaryMask&) const = default;
};

/// Run-length encoded mask in the dataset's published convention: runs scan
/// the image column-major, alternate background-first, and sum to w*h.
struct RleMask {
  std::vector<std::uint64_t> counts;
  int width = 0;
  int height = 0;

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

inline BinaryMask decode_rle(const RleMask& rle) {
  if (rle.width < 1 || rle.height < 1) throw Error("invalid RLE shape");
  const std::uint64_t expected =
      static_cast<std::uint64_t>(rle.width) * rle.height;
  if (rle.total() != expected) {
    throw Error("RLE counts sum " + std::to_string(rle.total()) +
                " != " + std::to_string(expected));
  }
  BinaryMask mask(rle.width, rle.height);
  std::uint64_t pos = 0;
  std::uint8_t value = 0;
  for (std::uint64_t run : rle.counts) {
    for (std::uint64_t k = 0; k < run; ++k, ++pos) {
      if (value) {
        const int col = static_cast<int>(pos / rle.height);
        const int row = static_cast<int>(pos % rle.height);
        mask.set(col, row);
      }
    }
    value ^= 1;
  }
  return mask;
}

/// Canonical inverse of decode_rle: no zero-length interior runs, a leading
/// zero only when the mask starts with foreground, trailing run included.
inline RleMask encode_rle(const BinaryMask& mask) {
  RleMask rle;
  rle.width = mask.width;
  rle.height = mask.height;
  std::uint8_t value = 0;
  std::uint64_t run = 0;
  for (int col = 0; col < mask.width; ++col) {
    for (int row = 0; row < mask.height; ++row) {
      const std::uint8_t v = mask.at(col, row) ? 1 : 0;
      if (v == value) {
        ++run;
      } else {
        rle.counts.push_back(run);
        value = v;
        run = 1;
      }
    }
  }
  rle.counts.push_back(run);
  return rle;
}

// ---------------------------------------------------------------------------
// Records and the annotation set

struct RadiographRecord {
  std::string image_id;
  std::string patient_id;
  Split split = Split::test;
  ViewPosition view;
  std::filesystem::path image_path;
  int native_width = 0;
  int native_height = 0;
};

/// Immutable after load; safe to share across concurrent readers.
struct AnnotationSet {
  std::vector<RadiographRecord> records;
  std::map<std::pair<std::string, Pathology>, BinaryMask> masks;
  std::vector<std::string> warnings;

  const RadiographRecord* find_record(const std::string& image_id) const {
    for (const auto& r : records) {
      if (r.image_id == image_id) return &r;
    }
    return nullptr;
  }
  const BinaryMask* find_mask(const std::string& image_id, Pathology p) const {
    const auto it = masks.find({image_id, p});
    return it == masks.end() ? nullptr : &it->second;
  }
};

// ---------------------------------------------------------------------------
// Manifest loading

namespace detail {

/// COCO-style compressed counts string (pycocotools "counts" encoding):
/// 5-bit groups with a continuation bit, deltas from the third element on.
inline std::vector<std::uint64_t> decode_coco_counts(std::string_view s) {
  std::vector<long long> counts;
  std::size_t p = 0;
  while (p < s.size()) {
    long long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw Error("truncated compressed RLE string");
      const int c = s[p] - 48;
      if (c < 0 || c > 63) throw Error("invalid compressed RLE character");
      x |= static_cast<long long>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1LL << (5 * k);
    }
    if (counts.size() > 2) x += counts[counts.size() - 2];
    counts.push_back(x);
  }
  std::vector<std::uint64_t> out;
  out.reserve(counts.size());
  for (long long c : counts) {
    if (c < 0) throw Error("negative run in compressed RLE string");
    out.push_back(static_cast<std::uint64_t>(c));
  }
  return out;
}

inline RleMask rle_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("size") || !j.contains("counts")) {
    throw Error(where + ": mask object needs \"size\" and \"counts\"");
  }
  const auto& size = j.at("size");
  if (!size.is_array() || size.size() != 2) {
    throw Error(where + ": mask size must be [height, width]");
  }
  RleMask rle;
  rle.height = size.at(0).get<int>();
  rle.width = size.at(1).get<int>();
  const auto& counts = j.at("counts");
  if (counts.is_string()) {
    rle.counts = decode_coco_counts(counts.get<std::string>());
  } else if (counts.is_array()) {
    for (const auto& c : counts) {
      const auto v = c.get<long long>();
      if (v < 0) throw Error(where + ": negative RLE count");
      rle.counts.push_back(static_cast<std::uint64_t>(v));
    }
  } else {
    throw Error(where + ": counts must be an integer array or encoded string");
  }
  return rle;
}

inline std::string default_patient_id(const std::string& image_id) {
  const auto pos = image_id.find('_');
  return pos == std::string::npos ? image_id : image_id.substr(0, pos);
}

}  // namespace detail

/// Loads an annotated corpus from a JSON manifest. Two mask conventions are
/// accepted per entry and may be mixed:
///   - {"size": [h, w], "counts": [..] | "<compressed>"} — column-major RLE,
///     the dataset's published annotation convention;
///   - "relative/path.png" — single-channel mask image, nonzero = foreground
///     (the synthetic corpus layout).
/// Relative paths resolve against images_root. Unknown pathology names and
/// Support Devices entries are skipped with a warning; structural problems
/// (bad RLE sums, missing files, dimension mismatches) are errors.
inline AnnotationSet load_manifest(const std::filesystem::path& manifest_path,
                                   const std::filesystem::path& images_root) {
  nlohmann::json doc;
  {
    std::ifstream in(manifest_path);
    if (!in) throw Error("cannot open manifest: " + manifest_path.string());
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
  }
  if (!doc.is_object() || !doc.contains("images") || !doc.at("images").is_array()) {
    throw Error("manifest must be an object with an \"images\" array");
  }

  AnnotationSet set;
  for (const auto& entry : doc.at("images")) {
    if (!entry.is_object()) throw Error("manifest image entry must be an object");
    RadiographRecord rec;
    try {
      rec.image_id = entry.at("image_id").get<std::string>();
      rec.view = parse_view(entry.at("view").get<std::string>());
      rec.split = parse_split(entry.at("split").get<std::string>());
      rec.image_path = images_root / entry.at("image").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error("manifest image entry missing required field: " +
                  std::string(e.what()));
    }
    rec.patient_id = entry.value("patient_id",
                                 detail::default_patient_id(rec.image_id));

    if (set.find_record(rec.image_id) != nullptr) {
      throw Error("duplicate image_id in manifest: " + rec.image_id);
    }
    if (!std::filesystem::exists(rec.image_path)) {
      throw Error("missing image file: " + rec.image_path.string());
    }
    const auto [w, h] = read_png_dims(rec.image_path);
    rec.native_width = w;
    rec.native_height = h;
    if (entry.contains("width") && entry.at("width").get<int>() != w) {
      throw Error(rec.image_id + ": manifest width " +
                  std::to_string(entry.at("width").get<int>()) +
                  " != image width " + std::to_string(w));
    }
    if (entry.contains("height") && entry.at("height").get<int>() != h) {
      throw Error(rec.image_id + ": manifest height " +
                  std::to_string(entry.at("height").get<int>()) +
                  " != image height " + std::to_string(h));
    }
    if (w < 1 || h < 1) throw Error(rec.image_id + ": degenerate image");

    if (entry.contains("masks")) {
      const auto& masks = entry.at("masks");
      if (!masks.is_object()) throw Error(rec.image_id + ": masks must be an object");
      for (const auto& [name, value] : masks.items()) {
        const std::string where = rec.image_id + "/" + name;
        if (is_support_devices(name)) {
          set.warnings.push_back("skipped Support Devices entry: " + where);
          continue;
        }
        const auto pathology = parse_pathology(name);
        if (!pathology) {
          set.warnings.push_back("skipped unknown pathology '" + name +
                                 "' for image " + rec.image_id);
          continue;
        }
        if (set.masks.count({rec.image_id, *pathology}) != 0) {
          throw Error("duplicate mask entry: " + where);
        }

        BinaryMask mask;
        if (value.is_string()) {
          const auto mask_path = images_root / value.get<std::string>();
          if (!std::filesystem::exists(mask_path)) {
            throw Error(where + ": missing mask file " + mask_path.string());
          }
          const Image8 img = read_png(mask_path);
          if (img.channels != 1) {
            throw Error(where + ": mask images must be single-channel");
          }
          mask = BinaryMask(img.width, img.height);
          for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            mask.bits[i] = img.pixels[i] != 0 ? 1 : 0;
          }
        } else {
          RleMask rle = detail::rle_from_json(value, where);
          try {
            mask = decode_rle(rle);
          } catch (const Error& e) {
            throw Error(where + ": " + e.what());
          }
        }
        if (mask.width != rec.native_width || mask.height != rec.native_height) {
          throw Error(where + ": mask is " + std::to_string(mask.width) + "x" +
                      std::to_string(mask.height) + " but image is " +
                      std::to_string(rec.native_width) + "x" +
                      std::to_string(rec.native_height));
        }
        set.masks.emplace(std::make_pair(rec.image_id, *pathology),
                          std::move(mask));
      }
    }
    set.records.push_back(std::move(rec));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Task selection

/// One (image, pathology) query at a given grid resolution.
struct LocalizationTask {
  std::string image_id;
  Pathology pathology = Pathology::Atelectasis;
  ViewPosition view;
  GridSpec grid;

  /// Stable identity used for cache keys and RNG stream derivation.
  std::string key() const {
    return image_id + "|" + slug(pathology) + "|" + grid.name() + "@" +
           std::to_string(grid.canvas_side);
  }
};

/// One task per (image, pathology) mask entry passing the filters, ordered by
/// image_id then pathology name.
inline std::vector<LocalizationTask> select_tasks(
    const AnnotationSet& set, Split split,
    std::optional<ViewPosition::Kind> view_filter,
    const std::vector<Pathology>* pathology_filter, const GridSpec& grid) {
  grid.validate();
  std::vector<LocalizationTask> tasks;
  for (const auto& rec : set.records) {
    if (rec.split != split) continue;
    if (view_filter && rec.view.kind != *view_filter) continue;
    for (Pathology p : kAllPathologies) {
      if (pathology_filter != nullptr &&
          std::find(pathology_filter->begin(), pathology_filter->end(), p) ==
              pathology_filter->end()) {
        continue;
      }
      if (set.masks.count({rec.image_id, p}) == 0) continue;
      tasks.push_back({rec.image_id, p, rec.view, grid});
    }
  }
  std::sort(tasks.begin(), tasks.end(), [](const auto& a, const auto& b) {
    if (a.image_id != b.image_id) return a.image_id < b.image_id;
    return a.pathology < b.pathology;
  });
  return tasks;
}

}  // namespace gridloc
