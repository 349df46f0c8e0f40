#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "geosage/corpus.hpp"
#include "geosage/model.hpp"

namespace geosage {

struct Query {
  std::int32_t user = kColdUser;  // kColdUser for users unseen at training
  GeoPoint location;
  std::int32_t k = 10;
  double radius_km = 100.0;
  std::int32_t zoom_level = 0;  // 0 means "use the full pyramid height"
};

// Descending score, ties broken by ascending item id.
struct RankedList {
  std::vector<std::pair<std::int32_t, double>> entries;
};

// Leaf-cell -> item-id buckets for radius scans.
class SpatialItemIndex {
 public:
  SpatialItemIndex(const Dictionaries& dicts, const PyramidConfig& pyramid);

  // All items within radius_km of the center, excluding the given sorted id
  // set; boundary items (distance exactly radius_km) are included.
  std::vector<std::int32_t> within_radius(const GeoPoint& center, double radius_km,
                                          const std::vector<std::int32_t>& exclude) const;

  const PyramidConfig& pyramid() const { return pyramid_; }

 private:
  const Dictionaries* dicts_;
  PyramidConfig pyramid_;
  std::vector<std::vector<std::int32_t>> buckets_;  // (2^H)^2 leaf cells
};

// Tourist iff strictly farther than d_km from home; no home means tourist
// unless the caller overrides the cold default.
std::int32_t role_for_query(const std::optional<GeoPoint>& home, const GeoPoint& location,
                            double d_km, std::int32_t cold_default = 1);

// Per-query scoring state: log alpha for the query context plus the log
// normalizers of beta and gamma, so each candidate costs O(K * |W_v|).
class ItemScorer {
 public:
  ItemScorer(const ModelParams& params, std::int32_t user, std::int32_t role,
             const CellPath& path, std::int32_t zoom_level);

  // Geometric-mean content score: sum_z alpha_z * (prod_n beta)^(1/|W_v|) * gamma_z,v.
  double score(std::int32_t item, const std::vector<std::int32_t>& words) const;

  // Per-topic breakdown of the score for one item (for --explain output).
  struct TopicTerm {
    double alpha = 0.0;
    double content = 0.0;  // geometric-mean word factor
    double gamma = 0.0;
  };
  std::vector<TopicTerm> explain(std::int32_t item, const std::vector<std::int32_t>& words) const;

 private:
  const ModelParams* params_;
  std::vector<double> log_alpha_;
  std::vector<double> log_z_beta_;
  std::vector<double> log_z_gamma_;
};

double score_item(const ModelParams& params, std::int32_t user, std::int32_t role,
                  const CellPath& path, std::int32_t item,
                  const std::vector<std::int32_t>& words, std::int32_t zoom_level);

// Top-k unvisited nearby items for the query. Throws DictMismatch when the
// model was trained against different dictionaries.
RankedList recommend(const ModelParams& params, const CorpusBundle& bundle,
                     const SpatialItemIndex& index, const Query& query,
                     std::int32_t cold_role_default = 1);

}  // namespace geosage
