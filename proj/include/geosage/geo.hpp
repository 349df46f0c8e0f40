#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "geosage/errors.hpp"

namespace geosage {

inline constexpr double kEarthRadiusKm = 6371.0;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  GeoPoint() = default;
  GeoPoint(double lat_deg, double lon_deg);  // validates finiteness and bounds

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct BoundingBox {
  GeoPoint min;
  GeoPoint max;

  BoundingBox() = default;
  BoundingBox(GeoPoint lo, GeoPoint hi);  // requires min.lat < max.lat, min.lon < max.lon

  bool contains(const GeoPoint& p) const {
    return p.lat >= min.lat && p.lat <= max.lat && p.lon >= min.lon && p.lon <= max.lon;
  }
};

// Default root extent: continental USA. Deployments with other data override it.
BoundingBox continental_usa();

struct CellId {
  std::int32_t level = 1;
  std::int32_t x = 0;
  std::int32_t y = 0;

  friend auto operator<=>(const CellId&, const CellId&) = default;
};

// Quadtree parent one level up.
inline CellId parent_of(const CellId& c) {
  return CellId{c.level - 1, c.x >> 1, c.y >> 1};
}

// Ancestor of a cell at the given (shallower or equal) level.
inline CellId ancestor_at(const CellId& c, std::int32_t level) {
  return CellId{level, c.x >> (c.level - level), c.y >> (c.level - level)};
}

// Root-to-leaf cell path; cells[h-1] is the level-h cell.
struct CellPath {
  std::vector<CellId> cells;

  const CellId& at_level(std::int32_t h) const { return cells[static_cast<std::size_t>(h - 1)]; }
  std::int32_t height() const { return static_cast<std::int32_t>(cells.size()); }
};

// Reconstructs the full path from a leaf cell (ancestors by halving).
inline CellPath path_from_leaf(const CellId& leaf) {
  CellPath path;
  path.cells.reserve(static_cast<std::size_t>(leaf.level));
  for (std::int32_t h = 1; h <= leaf.level; ++h) path.cells.push_back(ancestor_at(leaf, h));
  return path;
}

struct PyramidConfig {
  BoundingBox bbox;
  std::int32_t height = 5;

  PyramidConfig() : bbox(continental_usa()) {}
  PyramidConfig(BoundingBox b, std::int32_t h);
};

// Great-circle distance in km, Earth radius fixed at 6371.0.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

// Grid cell containing p at the given level. Points on interior grid lines go
// to the higher-index cell; points on the max edge clamp to the last cell.
CellId cell_of(const GeoPoint& p, std::int32_t level, const PyramidConfig& cfg);

// Cells containing p at every level 1..height.
CellPath path_of(const GeoPoint& p, const PyramidConfig& cfg);

// Midpoint of the cell's lat/lon rectangle.
GeoPoint centroid(const CellId& c, const PyramidConfig& cfg);

// Inclusive x/y index ranges of the level cells overlapping a lat/lon
// rectangle (clamped to the grid); used for radius scans.
struct CellRange {
  std::int32_t x0 = 0, x1 = -1, y0 = 0, y1 = -1;
  bool empty() const { return x1 < x0 || y1 < y0; }
};

CellRange cell_range(const BoundingBox& rect, std::int32_t level, const PyramidConfig& cfg);

}  // namespace geosage
