#include "occbranch/dataset.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include "json.hpp"
#include <sstream>

#include "occbranch/error.hpp"

namespace occbranch {

namespace fs = std::filesystem;
using nlohmann::json;

Sample make_sample(std::string id, const synth::TreeScene& scene, const synth::SceneBundle& bundle) {
  Sample s;
  s.id = std::move(id);
  s.kind = scene.kind;
  s.regime = scene.regime;
  s.seed = scene.seed;
  s.occlusion_fraction = bundle.occlusion_fraction;
  s.traits = synth::scene_traits(scene);
  s.image = bundle.image;
  s.whole_mask = bundle.whole_mask;
  s.visible_mask = bundle.visible_mask;
  s.target = bundle.target;
  return s;
}

namespace io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  if (std::string(mode).find('w') != std::string::npos && path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

/// Raw PNG writer for 8-bit gray/RGB or 1-bit gray rows.
void write_png_rows(const fs::path& path, int width, int height, int color_type, int bit_depth,
                    const std::vector<std::vector<png_byte>>& rows) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (const auto& row : rows) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Reads any PNG, expanded to 8-bit gray (1 channel) or RGB (3 channels).
RgbImage read_png_any(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed reading " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  RgbImage img(w, h, channels);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = img.data.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_png(const fs::path& path, const RgbImage& image) {
  if (image.channels != 3 && image.channels != 4) throw ShapeError("write_png expects 3 or 4 channels");
  std::vector<std::vector<png_byte>> rows(image.height, std::vector<png_byte>(image.width * 3));
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) rows[y][x * 3 + c] = image.at(x, y, c);
  write_png_rows(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 8, rows);
  if (image.channels == 4) {
    std::vector<std::vector<png_byte>> depth(image.height, std::vector<png_byte>(image.width));
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) depth[y][x] = image.at(x, y, 3);
    write_png_rows(path.parent_path() / "depth.png", image.width, image.height, PNG_COLOR_TYPE_GRAY, 8, depth);
  }
}

RgbImage read_png(const fs::path& path) {
  RgbImage rgb = read_png_any(path);
  if (rgb.channels == 1) {
    RgbImage expanded(rgb.width, rgb.height, 3);
    for (std::size_t i = 0; i < rgb.pixel_count(); ++i)
      for (int c = 0; c < 3; ++c) expanded.data[i * 3 + c] = rgb.data[i];
    rgb = std::move(expanded);
  }
  const fs::path depth_path = path.parent_path() / "depth.png";
  if (path.filename() == "image.png" && fs::exists(depth_path)) {
    const RgbImage depth = read_png_any(depth_path);
    RgbImage rgbd(rgb.width, rgb.height, 4);
    for (std::size_t i = 0; i < rgb.pixel_count(); ++i) {
      for (int c = 0; c < 3; ++c) rgbd.data[i * 4 + c] = rgb.data[i * 3 + c];
      rgbd.data[i * 4 + 3] = depth.data[i * depth.channels];
    }
    return rgbd;
  }
  return rgb;
}

void write_mask_png(const fs::path& path, const MaskImage& mask) {
  const int bytes = (mask.width + 7) / 8;
  std::vector<std::vector<png_byte>> rows(mask.height, std::vector<png_byte>(bytes, 0));
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) rows[y][x / 8] |= static_cast<png_byte>(0x80 >> (x % 8));
  write_png_rows(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 1, rows);
}

MaskImage read_mask_png(const fs::path& path) {
  const RgbImage img = read_png_any(path);
  MaskImage mask = make_mask(img.width, img.height);
  for (std::size_t i = 0; i < mask.pixel_count(); ++i) mask.data[i] = img.data[i * img.channels] >= 128 ? 1 : 0;
  return mask;
}

void write_target_csv(const fs::path& path, const PositionTarget& target) {
  std::ostringstream out;
  out << "row_index";
  for (int b = 0; b < target.n_branches; ++b) out << ",branch_" << b << "_x";
  out << ",valid_flag\n";
  for (int r = 0; r < target.height; ++r) {
    out << r;
    for (int b = 0; b < target.n_branches; ++b) {
      out << ',';
      if (target.is_valid(b, r)) out << format_double(target.coord(b, r));
    }
    out << ',' << (target.row_valid(r) ? 1 : 0) << '\n';
  }
  write_text(path, out.str());
}

PositionTarget read_target_csv(const fs::path& path, int width) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty target file");
  int n = 0;
  for (std::size_t pos = 0; (pos = line.find("branch_", pos)) != std::string::npos; ++pos) ++n;
  if (n == 0) throw IoError(path.string() + ": no branch columns in header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (static_cast<int>(fields.size()) != n + 2) throw IoError(path.string() + ": malformed row '" + line + "'");
    rows.push_back(std::move(fields));
  }
  PositionTarget t(n, width, static_cast<int>(rows.size()));
  for (int r = 0; r < t.height; ++r) {
    for (int b = 0; b < n; ++b) {
      const std::string& f = rows[r][1 + b];
      if (!f.empty()) t.set(b, r, std::stod(f));
    }
  }
  return t;
}

std::vector<std::string> Manifest::ids_in_groups(const std::vector<int>& groups) const {
  std::vector<std::string> out;
  for (const auto& e : samples)
    for (int g : groups)
      if (e.group == g) out.push_back(e.id);
  return out;
}

std::vector<std::string> Manifest::ids_excluding_group(int group) const {
  std::vector<std::string> out;
  for (const auto& e : samples)
    if (e.group != group) out.push_back(e.id);
  return out;
}

void write_sample(const fs::path& root, const Sample& s) {
  const fs::path dir = root / s.id;
  write_png(dir / "image.png", s.image);
  write_mask_png(dir / "whole.png", s.whole_mask);
  write_mask_png(dir / "visible.png", s.visible_mask);
  write_target_csv(dir / "target.csv", s.target);
  json meta = {{"id", s.id},
               {"kind", synth::to_string(s.kind)},
               {"seed", s.seed},
               {"regime", synth::to_string(s.regime)},
               {"occlusion_fraction", s.occlusion_fraction},
               {"group", s.group},
               {"min_radius", s.traits.min_radius},
               {"max_bend_deg", s.traits.max_bend_deg},
               {"merge_fraction", s.traits.merge_fraction}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

Sample read_sample(const fs::path& root, const std::string& id) {
  const fs::path dir = root / id;
  if (!fs::exists(dir / "meta.json")) throw IoError("missing sample " + (dir / "meta.json").string());
  Sample s;
  try {
    const json meta = json::parse(read_text(dir / "meta.json"));
    s.id = meta.at("id").get<std::string>();
    s.kind = synth::parse_tree_kind(meta.at("kind").get<std::string>());
    s.seed = meta.at("seed").get<std::uint64_t>();
    s.regime = synth::parse_regime(meta.at("regime").get<std::string>());
    s.occlusion_fraction = meta.at("occlusion_fraction").get<double>();
    s.group = meta.value("group", 0);
    s.traits.min_radius = meta.value("min_radius", 0.0);
    s.traits.max_bend_deg = meta.value("max_bend_deg", 0.0);
    s.traits.merge_fraction = meta.value("merge_fraction", -1.0);
  } catch (const json::exception& e) {
    throw IoError((dir / "meta.json").string() + ": " + e.what());
  }
  s.image = read_png(dir / "image.png");
  s.whole_mask = read_mask_png(dir / "whole.png");
  s.visible_mask = read_mask_png(dir / "visible.png");
  const int extent = s.kind == synth::TreeKind::horizontal_vine ? s.image.height : s.image.width;
  s.target = read_target_csv(dir / "target.csv", extent);
  return s;
}

void write_manifest(const fs::path& root, const Manifest& m) {
  json samples = json::array();
  for (const auto& e : m.samples) samples.push_back({{"id", e.id}, {"regime", e.regime}, {"group", e.group}});
  json j = {{"format", "occbranch-dataset"},
            {"version", 1},
            {"kind", m.kind},
            {"width", m.width},
            {"height", m.height},
            {"n_branches", m.n_branches},
            {"k", m.k},
            {"scene_seed", m.scene_seed},
            {"split_seed", m.split_seed},
            {"samples", samples}};
  write_text(root / "manifest.json", j.dump(2) + "\n");
}

Manifest read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  if (!fs::exists(path)) throw IoError("no manifest at " + path.string());
  Manifest m;
  try {
    const json j = json::parse(read_text(path));
    m.kind = j.at("kind").get<std::string>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.n_branches = j.at("n_branches").get<int>();
    m.k = j.at("k").get<int>();
    m.scene_seed = j.at("scene_seed").get<std::uint64_t>();
    m.split_seed = j.at("split_seed").get<std::uint64_t>();
    for (const auto& e : j.at("samples")) {
      m.samples.push_back({e.at("id").get<std::string>(), e.at("regime").get<std::string>(), e.at("group").get<int>()});
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return m;
}

std::vector<Sample> read_samples(const fs::path& root, const std::vector<std::string>& ids) {
  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(read_sample(root, id));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace io
}  // namespace occbranch
