#include "rgc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>

#include "json.hpp"
#include "rgc/error.hpp"

namespace rgc::io {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return e;
}

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

LabelGrid read_png(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialisation failed");
  }
  LabelGrid out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG: " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const auto width = static_cast<int>(png_get_image_width(png, info));
  const auto height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("expected 8-bit grayscale PNG: " + path.string());
  }
  out = LabelGrid(height, width, 0);
  rows.resize(static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) rows[static_cast<std::size_t>(r)] = &out(r, 0);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const LabelGrid& image, const fs::path& path) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
               static_cast<png_uint_32>(image.height()), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < image.height(); ++r) {
    rows[static_cast<std::size_t>(r)] = const_cast<png_bytep>(&image(r, 0));
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  char ch = 0;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string discard;
      std::getline(in, discard);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

int pgm_int(std::istream& in, const fs::path& path) {
  const std::string tok = pgm_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad PGM header in " + path.string());
  }
}

LabelGrid read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = pgm_token(in);
  if (magic != "P5" && magic != "P2") throw FormatError("not a PGM file: " + path.string());
  const int width = pgm_int(in, path);
  const int height = pgm_int(in, path);
  const int maxval = pgm_int(in, path);
  if (width <= 0 || height <= 0) throw FormatError("bad PGM dimensions in " + path.string());
  if (maxval != 255) throw FormatError("expected 8-bit PGM (maxval 255): " + path.string());
  LabelGrid out(height, width, 0);
  if (magic == "P5") {
    in.read(reinterpret_cast<char*>(out.storage().data()),
            static_cast<std::streamsize>(out.size()));
    if (in.gcount() != static_cast<std::streamsize>(out.size())) {
      throw FormatError("truncated PGM: " + path.string());
    }
  } else {
    for (auto& v : out.storage()) {
      const int x = pgm_int(in, path);
      if (x < 0 || x > 255) throw FormatError("PGM sample out of range: " + path.string());
      v = static_cast<std::uint8_t>(x);
    }
  }
  return out;
}

void write_pgm(const LabelGrid& image, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.storage().data()),
            static_cast<std::streamsize>(image.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

LabelGrid read_gray8(const fs::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open " + path.string());
  unsigned char head[8] = {};
  probe.read(reinterpret_cast<char*>(head), sizeof head);
  probe.close();
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (std::equal(std::begin(kPngSig), std::end(kPngSig), head)) return read_png(path);
  if (head[0] == 'P' && (head[1] == '5' || head[1] == '2')) return read_pgm(path);
  throw FormatError("unknown image format: " + path.string());
}

void write_gray8(const LabelGrid& image, const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png" || ext == ".pgm") {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  }
  if (ext == ".png") {
    write_png(image, path);
  } else if (ext == ".pgm") {
    write_pgm(image, path);
  } else {
    throw FormatError("unsupported output format '" + ext + "' (use .png or .pgm)");
  }
}

fs::path sidecar_path(const fs::path& scan_path) {
  fs::path p = scan_path;
  p.replace_extension(".json");
  return p;
}

std::optional<ScanMetadata> read_sidecar(const fs::path& scan_path) {
  const fs::path p = sidecar_path(scan_path);
  if (!fs::exists(p)) return std::nullopt;
  json j;
  try {
    j = json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw FormatError("bad sidecar " + p.string() + ": " + e.what());
  }
  ScanMetadata m;
  m.id = j.value("id", scan_path.stem().string());
  if (j.contains("axial_scale_um_per_px")) {
    m.axial_scale_um_per_px = j.at("axial_scale_um_per_px").get<double>();
    m.scale_assumed = j.value("axial_scale_assumed", false);
  }
  if (j.contains("grade") && !j.at("grade").is_null()) {
    m.grade = parse_grade(j.at("grade").get<std::string>());
    if (!m.grade) throw FormatError("bad grade in " + p.string());
  }
  return m;
}

void write_sidecar(const ScanMetadata& meta, const fs::path& scan_path) {
  json j;
  j["id"] = meta.id;
  j["axial_scale_um_per_px"] = meta.axial_scale_um_per_px;
  j["axial_scale_assumed"] = meta.scale_assumed;
  if (meta.grade) j["grade"] = std::string(to_string(*meta.grade));
  write_text(j.dump(2) + "\n", sidecar_path(scan_path));
}

namespace {

Scan scan_from_bytes(const LabelGrid& bytes, double scale, std::string id) {
  RealGrid px(bytes.height(), bytes.width(), 0.0);
  for (std::size_t i = 0; i < bytes.size(); ++i) px.storage()[i] = bytes.storage()[i] / 255.0;
  return Scan(std::move(px), scale, std::move(id));
}

}  // namespace

Scan read_scan(const fs::path& path) {
  const LabelGrid bytes = read_gray8(path);
  const auto meta = read_sidecar(path);
  if (meta) return scan_from_bytes(bytes, meta->axial_scale_um_per_px, meta->id);
  return scan_from_bytes(bytes, kDefaultAxialScaleUm, path.stem().string());
}

Scan read_scan(const fs::path& path, double axial_scale_um_per_px) {
  const LabelGrid bytes = read_gray8(path);
  const auto meta = read_sidecar(path);
  return scan_from_bytes(bytes, axial_scale_um_per_px, meta ? meta->id : path.stem().string());
}

void write_scan(const Scan& scan, const fs::path& path) {
  LabelGrid bytes(scan.height(), scan.width(), 0);
  const auto& src = scan.pixels().storage();
  for (std::size_t i = 0; i < src.size(); ++i) {
    bytes.storage()[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0, 1.0) * 255.0));
  }
  write_gray8(bytes, path);
}

LayerMask read_mask(const fs::path& path) {
  LabelGrid labels = read_gray8(path);
  for (auto v : labels.values()) {
    if (v > 2) {
      throw FormatError("label value " + std::to_string(v) + " outside {0,1,2} in " +
                        path.string());
    }
  }
  return LayerMask(std::move(labels));
}

LayerMask read_mask(const fs::path& path, const Scan& paired) {
  LayerMask m = read_mask(path);
  if (m.height() != paired.height() || m.width() != paired.width()) {
    throw ValidationError("mask " + path.string() + " is " + std::to_string(m.width()) + "x" +
                          std::to_string(m.height()) + " but its scan is " +
                          std::to_string(paired.width()) + "x" + std::to_string(paired.height()));
  }
  return m;
}

void write_mask(const LayerMask& mask, const fs::path& path) { write_gray8(mask.labels(), path); }

void write_binary_mask(const LabelGrid& mask, const fs::path& path) {
  LabelGrid out = mask;
  for (auto& v : out.storage()) v = v ? 255 : 0;
  write_gray8(out, path);
}

void write_boundaries_csv(const BoundarySet& b, const fs::path& path) {
  std::ostringstream os;
  os << "col,ilm,gcl,ipl,choroid,valid\n";
  os << std::setprecision(17);
  for (int c = 0; c < b.width(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    os << c << ',' << b.ilm[i] << ',' << b.gcl[i] << ',' << b.ipl[i] << ',' << b.choroid[i] << ','
       << (b.valid[i] ? 1 : 0) << '\n';
  }
  write_text(os.str(), path);
}

BoundarySet read_boundaries_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "col,ilm,gcl,ipl,choroid,valid") {
    throw FormatError("bad boundary CSV header in " + path.string());
  }
  BoundarySet b;
  int expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw FormatError("bad boundary CSV row: " + line);
    try {
      if (std::stoi(cells[0]) != expected) throw FormatError("non-sequential column in " + path.string());
      b.ilm.push_back(std::stod(cells[1]));
      b.gcl.push_back(std::stod(cells[2]));
      b.ipl.push_back(std::stod(cells[3]));
      b.choroid.push_back(std::stod(cells[4]));
      b.valid.push_back(std::stoi(cells[5]) != 0);
    } catch (const std::logic_error&) {
      throw FormatError("bad boundary CSV row: " + line);
    }
    ++expected;
  }
  return b;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& text, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace rgc::io
