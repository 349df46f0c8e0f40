#include "geosage/geo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace geosage {

namespace {

constexpr double kPi = 3.14159265358979323846;

double to_rad(double deg) { return deg * kPi / 180.0; }

}  // namespace

GeoPoint::GeoPoint(double lat_deg, double lon_deg) : lat(lat_deg), lon(lon_deg) {
  if (!std::isfinite(lat) || !std::isfinite(lon) || lat < -90.0 || lat > 90.0 ||
      lon < -180.0 || lon > 180.0) {
    throw InvalidCoordinate("invalid coordinate (" + std::to_string(lat_deg) + ", " +
                            std::to_string(lon_deg) + ")");
  }
}

BoundingBox::BoundingBox(GeoPoint lo, GeoPoint hi) : min(lo), max(hi) {
  if (!(min.lat < max.lat) || !(min.lon < max.lon)) {
    throw InvalidCoordinate("bounding box min must be strictly below max");
  }
}

BoundingBox continental_usa() {
  return BoundingBox(GeoPoint(24.0, -125.0), GeoPoint(50.0, -66.0));
}

PyramidConfig::PyramidConfig(BoundingBox b, std::int32_t h) : bbox(b), height(h) {
  if (h < 1) throw InvalidCoordinate("pyramid height must be >= 1");
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double lat1 = to_rad(a.lat);
  const double lat2 = to_rad(b.lat);
  const double dlat = to_rad(b.lat - a.lat);
  const double dlon = to_rad(b.lon - a.lon);
  const double sl = std::sin(dlat / 2.0);
  const double so = std::sin(dlon / 2.0);
  double h = sl * sl + std::cos(lat1) * std::cos(lat2) * so * so;
  h = std::clamp(h, 0.0, 1.0);
  return kEarthRadiusKm * 2.0 * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

CellId cell_of(const GeoPoint& p, std::int32_t level, const PyramidConfig& cfg) {
  const BoundingBox& bb = cfg.bbox;
  if (!bb.contains(p)) {
    throw PointOutsideBbox("point (" + std::to_string(p.lat) + ", " + std::to_string(p.lon) +
                           ") outside pyramid bounding box");
  }
  const std::int32_t n = std::int32_t{1} << level;
  auto index = [n](double v, double lo, double hi) {
    auto i = static_cast<std::int32_t>(std::floor(n * (v - lo) / (hi - lo)));
    return std::clamp(i, std::int32_t{0}, n - 1);
  };
  return CellId{level, index(p.lon, bb.min.lon, bb.max.lon), index(p.lat, bb.min.lat, bb.max.lat)};
}

CellPath path_of(const GeoPoint& p, const PyramidConfig& cfg) {
  CellPath path;
  path.cells.reserve(static_cast<std::size_t>(cfg.height));
  for (std::int32_t h = 1; h <= cfg.height; ++h) path.cells.push_back(cell_of(p, h, cfg));
  return path;
}

GeoPoint centroid(const CellId& c, const PyramidConfig& cfg) {
  const BoundingBox& bb = cfg.bbox;
  const double n = static_cast<double>(std::int32_t{1} << c.level);
  const double dlat = (bb.max.lat - bb.min.lat) / n;
  const double dlon = (bb.max.lon - bb.min.lon) / n;
  return GeoPoint(bb.min.lat + (c.y + 0.5) * dlat, bb.min.lon + (c.x + 0.5) * dlon);
}

CellRange cell_range(const BoundingBox& rect, std::int32_t level, const PyramidConfig& cfg) {
  const BoundingBox& bb = cfg.bbox;
  const std::int32_t n = std::int32_t{1} << level;
  auto lo_index = [&](double v, double lo, double hi) {
    return static_cast<std::int32_t>(std::floor(n * (v - lo) / (hi - lo)));
  };
  CellRange r;
  r.x0 = std::max(std::int32_t{0}, lo_index(rect.min.lon, bb.min.lon, bb.max.lon));
  r.x1 = std::min(n - 1, lo_index(rect.max.lon, bb.min.lon, bb.max.lon));
  r.y0 = std::max(std::int32_t{0}, lo_index(rect.min.lat, bb.min.lat, bb.max.lat));
  r.y1 = std::min(n - 1, lo_index(rect.max.lat, bb.min.lat, bb.max.lat));
  return r;
}

}  // namespace geosage
