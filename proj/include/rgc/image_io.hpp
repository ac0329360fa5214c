#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "rgc/scan.hpp"

namespace rgc::io {

/// 8-bit grayscale image in memory. Supported containers: PNG and binary or
/// ASCII PGM (P5/P2). The container is chosen from the file extension on
/// write and sniffed from the magic bytes on read.
LabelGrid read_gray8(const std::filesystem::path& path);
void write_gray8(const LabelGrid& image, const std::filesystem::path& path);

/// Sidecar metadata stored next to a scan as `<stem>.json`.
struct ScanMetadata {
  double axial_scale_um_per_px = kDefaultAxialScaleUm;
  std::string id;
  std::optional<GradeLabel> grade;
  /// True when the axial scale came from the default rather than a file.
  bool scale_assumed = true;
};

std::filesystem::path sidecar_path(const std::filesystem::path& scan_path);
std::optional<ScanMetadata> read_sidecar(const std::filesystem::path& scan_path);
void write_sidecar(const ScanMetadata& meta, const std::filesystem::path& scan_path);

/// Intensities are byte / 255. Metadata comes from the sidecar if present,
/// otherwise the default axial scale and the file stem as id.
Scan read_scan(const std::filesystem::path& path);
Scan read_scan(const std::filesystem::path& path, double axial_scale_um_per_px);
/// Intensities are rounded to the nearest byte.
void write_scan(const Scan& scan, const std::filesystem::path& path);

LayerMask read_mask(const std::filesystem::path& path);
/// Rejects a mask whose dimensions differ from its paired scan.
LayerMask read_mask(const std::filesystem::path& path, const Scan& paired);
void write_mask(const LayerMask& mask, const std::filesystem::path& path);

/// Binary (0/1) mask written as 0/255 for viewing.
void write_binary_mask(const LabelGrid& mask, const std::filesystem::path& path);

/// CSV with header `col,ilm,gcl,ipl,choroid,valid`.
void write_boundaries_csv(const BoundarySet& b, const std::filesystem::path& path);
BoundarySet read_boundaries_csv(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace rgc::io
