#include "geosage/recsys.hpp"

#include <algorithm>
#include <cmath>

#include "geosage/logmath.hpp"

namespace geosage {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kKmPerDegLat = kPi / 180.0 * kEarthRadiusKm;  // ~111.195

// Conservative lat/lon rectangle covering the radius circle, clamped to the
// pyramid box. Longitude width uses the smallest cosine in the lat range so
// the rectangle never undershoots.
BoundingBox circle_bounds(const GeoPoint& center, double radius_km, const BoundingBox& bbox) {
  const double dlat = radius_km / kKmPerDegLat;
  double lat_lo = std::max(center.lat - dlat, bbox.min.lat);
  double lat_hi = std::min(center.lat + dlat, bbox.max.lat);
  const double max_abs_lat = std::max(std::abs(lat_lo), std::abs(lat_hi));
  const double cos_lat = std::cos(max_abs_lat * kPi / 180.0);
  double lon_lo = bbox.min.lon;
  double lon_hi = bbox.max.lon;
  if (cos_lat > 1e-6) {
    const double dlon = radius_km / (kKmPerDegLat * cos_lat);
    lon_lo = std::max(center.lon - dlon, bbox.min.lon);
    lon_hi = std::min(center.lon + dlon, bbox.max.lon);
  }
  BoundingBox rect;
  rect.min = GeoPoint(lat_lo, lon_lo);
  rect.max = GeoPoint(std::max(lat_hi, lat_lo), std::max(lon_hi, lon_lo));
  return rect;
}

}  // namespace

SpatialItemIndex::SpatialItemIndex(const Dictionaries& dicts, const PyramidConfig& pyramid)
    : dicts_(&dicts), pyramid_(pyramid) {
  const std::size_t n = std::size_t{1} << pyramid.height;
  buckets_.resize(n * n);
  for (std::int32_t v = 0; v < dicts.n_items(); ++v) {
    const CellId cell = cell_of(dicts.item_locations[static_cast<std::size_t>(v)],
                                pyramid.height, pyramid);
    buckets_[static_cast<std::size_t>(cell.y) * n + static_cast<std::size_t>(cell.x)].push_back(v);
  }
}

std::vector<std::int32_t> SpatialItemIndex::within_radius(
    const GeoPoint& center, double radius_km, const std::vector<std::int32_t>& exclude) const {
  const std::size_t n = std::size_t{1} << pyramid_.height;
  const BoundingBox rect = circle_bounds(center, radius_km, pyramid_.bbox);
  const CellRange range = cell_range(rect, pyramid_.height, pyramid_);
  std::vector<std::int32_t> out;
  for (std::int32_t y = range.y0; y <= range.y1; ++y) {
    for (std::int32_t x = range.x0; x <= range.x1; ++x) {
      for (std::int32_t v : buckets_[static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x)]) {
        if (haversine_km(center, dicts_->item_locations[static_cast<std::size_t>(v)]) > radius_km)
          continue;
        if (std::binary_search(exclude.begin(), exclude.end(), v)) continue;
        out.push_back(v);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::int32_t role_for_query(const std::optional<GeoPoint>& home, const GeoPoint& location,
                            double d_km, std::int32_t cold_default) {
  if (!home) return cold_default;
  return haversine_km(*home, location) > d_km ? 1 : 0;
}

ItemScorer::ItemScorer(const ModelParams& params, std::int32_t user, std::int32_t role,
                       const CellPath& path, std::int32_t zoom_level)
    : params_(&params) {
  const std::int32_t upto = zoom_level > 0 ? zoom_level : params.config.pyramid.height;
  log_alpha_ = topic_logits(params, user, role, path, upto);
  const double lz = log_sum_exp(log_alpha_);
  for (double& x : log_alpha_) x -= lz;

  const auto k = static_cast<std::size_t>(params.config.topics);
  log_z_beta_.resize(k);
  log_z_gamma_.resize(k);
  std::vector<double> logits;
  for (std::size_t z = 0; z < k; ++z) {
    logits.assign(params.phi0.begin(), params.phi0.end());
    const double* dev = params.phi_topic.row(z);
    for (std::size_t w = 0; w < logits.size(); ++w) logits[w] += dev[w];
    log_z_beta_[z] = log_sum_exp(logits);
    logits.assign(params.psi0.begin(), params.psi0.end());
    const double* idev = params.psi_topic.row(z);
    for (std::size_t v = 0; v < logits.size(); ++v) logits[v] += idev[v];
    log_z_gamma_[z] = log_sum_exp(logits);
  }
}

double ItemScorer::score(std::int32_t item, const std::vector<std::int32_t>& words) const {
  const auto k = log_alpha_.size();
  const auto vi = static_cast<std::size_t>(item);
  std::vector<double> terms(k);
  for (std::size_t z = 0; z < k; ++z) {
    double log_term = log_alpha_[z];
    if (!words.empty()) {
      double word_logits = 0.0;
      for (std::int32_t w : words) {
        word_logits += params_->phi0[static_cast<std::size_t>(w)] +
                       params_->phi_topic.at(z, static_cast<std::size_t>(w));
      }
      log_term += word_logits / static_cast<double>(words.size()) - log_z_beta_[z];
    }
    log_term += params_->psi0[vi] + params_->psi_topic.at(z, vi) - log_z_gamma_[z];
    terms[z] = log_term;
  }
  return std::exp(log_sum_exp(terms));
}

std::vector<ItemScorer::TopicTerm> ItemScorer::explain(
    std::int32_t item, const std::vector<std::int32_t>& words) const {
  const auto k = log_alpha_.size();
  const auto vi = static_cast<std::size_t>(item);
  std::vector<TopicTerm> out(k);
  for (std::size_t z = 0; z < k; ++z) {
    out[z].alpha = std::exp(log_alpha_[z]);
    if (words.empty()) {
      out[z].content = 1.0;
    } else {
      double word_logits = 0.0;
      for (std::int32_t w : words) {
        word_logits += params_->phi0[static_cast<std::size_t>(w)] +
                       params_->phi_topic.at(z, static_cast<std::size_t>(w));
      }
      out[z].content =
          std::exp(word_logits / static_cast<double>(words.size()) - log_z_beta_[z]);
    }
    out[z].gamma = std::exp(params_->psi0[vi] + params_->psi_topic.at(z, vi) - log_z_gamma_[z]);
  }
  return out;
}

double score_item(const ModelParams& params, std::int32_t user, std::int32_t role,
                  const CellPath& path, std::int32_t item,
                  const std::vector<std::int32_t>& words, std::int32_t zoom_level) {
  return ItemScorer(params, user, role, path, zoom_level).score(item, words);
}

RankedList recommend(const ModelParams& params, const CorpusBundle& bundle,
                     const SpatialItemIndex& index, const Query& query,
                     std::int32_t cold_role_default) {
  if (params.dict_hash != dict_hash(bundle.dicts)) {
    throw DictMismatch("model was trained against different dictionaries");
  }
  std::optional<GeoPoint> home;
  std::vector<std::int32_t> visited;
  if (query.user != kColdUser) {
    home = bundle.homes[static_cast<std::size_t>(query.user)];
    visited = training_visits(bundle)[static_cast<std::size_t>(query.user)];
  }
  const std::int32_t role =
      role_for_query(home, query.location, params.config.d_km, cold_role_default);
  const std::vector<std::int32_t> cands =
      index.within_radius(query.location, query.radius_km, visited);

  const CellPath path = path_of(query.location, params.config.pyramid);
  const ItemScorer scorer(params, query.user, role, path, query.zoom_level);

  RankedList list;
  list.entries.reserve(cands.size());
  for (std::int32_t v : cands) {
    list.entries.emplace_back(v, scorer.score(v, bundle.dicts.item_words[static_cast<std::size_t>(v)]));
  }
  std::sort(list.entries.begin(), list.entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (list.entries.size() > static_cast<std::size_t>(query.k)) {
    list.entries.resize(static_cast<std::size_t>(query.k));
  }
  return list;
}

}  // namespace geosage
