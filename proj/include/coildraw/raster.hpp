#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "coildraw/geometry.hpp"

namespace coildraw {

/// Binary occupancy image. Row 0 is the bottom of the canvas; pixel (ix, iy)
/// covers [ix*res, (ix+1)*res) x [iy*res, (iy+1)*res).
struct BoolImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major, data[iy * width + ix]

  std::uint8_t& at(int ix, int iy) { return data[static_cast<std::size_t>(iy) * width + ix]; }
  std::uint8_t at(int ix, int iy) const { return data[static_cast<std::size_t>(iy) * width + ix]; }
  bool operator==(const BoolImage&) const = default;
};

namespace detail {

inline int image_cells(double span_um, double resolution_um) {
  const double cells = span_um / resolution_um;
  const double rounded = std::round(cells);
  if (!near(cells, rounded, 1e-6)) throw std::invalid_argument("raster: resolution must divide the canvas exactly");
  return static_cast<int>(rounded);
}

}  // namespace detail

/// Throws std::invalid_argument unless the resolution divides the canvas
/// dimensions and the grid pitch exactly.
inline void validate_resolution(const Canvas& canvas, double resolution_um) {
  if (resolution_um <= 0.0) throw std::invalid_argument("raster: resolution must be positive");
  detail::image_cells(canvas.width, resolution_um);
  detail::image_cells(canvas.height, resolution_um);
  detail::image_cells(canvas.grid_pitch, resolution_um);
}

/// Marks the image pixels whose centers fall strictly inside the segment's
/// inflated rectangle. Only scans the rectangle's bounding rows/columns.
inline void rasterize_segment(BoolImage& img, const Segment& seg, double resolution_um) {
  const Quad q = inflate(seg);
  double min_x = q.p[0].x, max_x = q.p[0].x, min_y = q.p[0].y, max_y = q.p[0].y;
  for (int i = 1; i < 4; ++i) {
    min_x = std::min(min_x, q.p[i].x);
    max_x = std::max(max_x, q.p[i].x);
    min_y = std::min(min_y, q.p[i].y);
    max_y = std::max(max_y, q.p[i].y);
  }
  const int ix0 = std::max(0, static_cast<int>(std::floor(min_x / resolution_um)) - 1);
  const int ix1 = std::min(img.width - 1, static_cast<int>(std::ceil(max_x / resolution_um)) + 1);
  const int iy0 = std::max(0, static_cast<int>(std::floor(min_y / resolution_um)) - 1);
  const int iy1 = std::min(img.height - 1, static_cast<int>(std::ceil(max_y / resolution_um)) + 1);
  for (int iy = iy0; iy <= iy1; ++iy) {
    for (int ix = ix0; ix <= ix1; ++ix) {
      const Point center{(ix + 0.5) * resolution_um, (iy + 0.5) * resolution_um};
      if (point_in_quad(center, q)) img.at(ix, iy) = 1;
    }
  }
}

/// Occupancy image of a segment chain at the given resolution.
inline BoolImage rasterize(const Canvas& canvas, std::span<const Segment> segments, double resolution_um) {
  validate_resolution(canvas, resolution_um);
  BoolImage img;
  img.width = detail::image_cells(canvas.width, resolution_um);
  img.height = detail::image_cells(canvas.height, resolution_um);
  img.data.assign(static_cast<std::size_t>(img.width) * img.height, 0);
  for (const Segment& s : segments) rasterize_segment(img, s, resolution_um);
  return img;
}

inline BoolImage rasterize(const Layout& layout, double resolution_um) {
  return rasterize(layout.canvas, std::span<const Segment>(layout.segments), resolution_um);
}

/// Mirror image across the vertical midline (column reversal).
inline BoolImage flip_horizontal(const BoolImage& img) {
  BoolImage out = img;
  for (int iy = 0; iy < img.height; ++iy) {
    for (int ix = 0; ix < img.width; ++ix) out.at(ix, iy) = img.at(img.width - 1 - ix, iy);
  }
  return out;
}

}  // namespace coildraw
