#include "geosage/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "geosage/logmath.hpp"
#include "geosage/rng.hpp"

namespace geosage {

namespace {

constexpr double kSynthDKm = 100.0;
constexpr double kDistantCellKm = 180.0;   // margin over d so roles can't flip
constexpr std::int64_t kRejectionCap = 100000;

std::string tagged(const char* prefix, std::int32_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, i);
  return buf;
}

double uniform_pm(Rng& rng, double magnitude) {
  return magnitude * (2.0 * uniform01(rng) - 1.0);
}

// Per-topic sampling tables for the item draw.
std::vector<std::vector<double>> topic_cdfs(const Matrix& log_probs) {
  std::vector<std::vector<double>> cdfs(log_probs.rows);
  for (std::size_t z = 0; z < log_probs.rows; ++z) {
    cdfs[z].resize(log_probs.cols);
    double acc = 0.0;
    for (std::size_t j = 0; j < log_probs.cols; ++j) {
      acc += std::exp(log_probs.at(z, j));
      cdfs[z][j] = acc;
    }
  }
  return cdfs;
}

std::int32_t draw_from_cdf(Rng& rng, const std::vector<double>& cdf) {
  const double r = uniform01(rng) * cdf.back();
  auto it = std::lower_bound(cdf.begin(), cdf.end(), r);
  if (it == cdf.end()) --it;
  return static_cast<std::int32_t>(it - cdf.begin());
}

}  // namespace

BoundingBox synth_bbox() {
  return BoundingBox(GeoPoint(36.0, -104.0), GeoPoint(40.0, -100.0));
}

ModelParams make_params(const SynthSpec& spec) {
  ModelConfig cfg;
  cfg.topics = spec.topics;
  cfg.variant = Variant::kFull;
  cfg.d_km = kSynthDKm;
  cfg.seed = spec.seed;
  cfg.pyramid = PyramidConfig(synth_bbox(), spec.height);

  Dims dims{spec.n_users, spec.n_items, spec.vocab_size};
  ModelParams params = init_params(cfg, dims);
  Rng rng(spec.seed);

  const auto k = static_cast<std::size_t>(spec.topics);
  // user interests: two mildly preferred topics each
  for (std::int32_t u = 0; u < spec.n_users; ++u) {
    TopicVector pref(k, 0.0);
    pref[uniform_below(rng, k)] += 0.6;
    pref[uniform_below(rng, k)] += 0.3;
    params.theta_user.emplace(u, std::move(pref));
  }
  // every word and item leans strongly on one dominant topic
  for (std::int32_t w = 0; w < spec.vocab_size; ++w) {
    params.phi_topic.at(static_cast<std::size_t>(w) % k, static_cast<std::size_t>(w)) = 3.0;
  }
  for (std::int32_t v = 0; v < spec.n_items; ++v) {
    params.psi_topic.at(static_cast<std::size_t>(v) % k, static_cast<std::size_t>(v)) = 4.0;
  }
  // crowd preferences: shared base per cell plus role-specific topic tilts
  // whose size scales with drift_strength. The strong tilt sits at level 1,
  // so a region's locals and visitors disagree coherently; deeper levels add
  // smaller refinements.
  for (std::int32_t h = 1; h <= spec.height; ++h) {
    const std::int32_t n = std::int32_t{1} << h;
    const double tilt = spec.drift_strength * (h == 1 ? 1.0 : 0.25);
    for (std::int32_t y = 0; y < n; ++y) {
      for (std::int32_t x = 0; x < n; ++x) {
        TopicVector base(k, 0.0);
        for (double& b : base) b = uniform_pm(rng, 0.2);
        std::size_t native_topic = uniform_below(rng, k);
        std::size_t tourist_topic =
            k > 1 ? (native_topic + 1 + uniform_below(rng, k - 1)) % k : native_topic;
        TopicVector native = base;
        TopicVector tourist = base;
        native[native_topic] += tilt;
        tourist[tourist_topic] += tilt;
        const CellId cell{h, x, y};
        params.theta_native.emplace(cell, std::move(native));
        params.theta_tourist.emplace(cell, std::move(tourist));
      }
    }
  }
  return params;
}

CorpusBundle sample_corpus(const ModelParams& params, const SynthSpec& spec) {
  const PyramidConfig& pyramid = params.config.pyramid;
  Rng rng(spec.seed ^ 0x5eed5eed5eed5eedULL);

  CorpusBundle bundle;
  bundle.pyramid = pyramid;
  bundle.d_km = params.config.d_km;
  bundle.split_fraction = 0.30;
  bundle.seed = spec.seed;

  Dictionaries& d = bundle.dicts;
  const auto k = static_cast<std::size_t>(spec.topics);

  // items: uniform placement, word set drawn once from the dominant topic
  const Matrix log_beta = log_beta_matrix(params);
  const auto beta_cdfs = topic_cdfs(log_beta);
  const BoundingBox& bb = pyramid.bbox;
  std::map<CellId, std::vector<std::int32_t>> cell_items;
  for (std::int32_t v = 0; v < spec.n_items; ++v) {
    d.items.push_back(tagged("v", v));
    d.item_ids.emplace(d.items.back(), v);
    const GeoPoint loc(bb.min.lat + uniform01(rng) * (bb.max.lat - bb.min.lat),
                       bb.min.lon + uniform01(rng) * (bb.max.lon - bb.min.lon));
    d.item_locations.push_back(loc);
    const std::size_t dominant = static_cast<std::size_t>(v) % k;
    const auto n_words = 3 + uniform_below(rng, 3);
    std::vector<std::int32_t> words;
    words.reserve(n_words);
    for (std::uint64_t j = 0; j < n_words; ++j) {
      words.push_back(draw_from_cdf(rng, beta_cdfs[dominant]));
    }
    d.item_words.push_back(std::move(words));
    cell_items[cell_of(loc, pyramid.height, pyramid)].push_back(v);
  }
  for (std::int32_t w = 0; w < spec.vocab_size; ++w) {
    d.vocab.push_back(tagged("w", w));
    d.vocab_ids.emplace(d.vocab.back(), w);
  }

  std::vector<CellId> eligible;
  for (const auto& [cell, items] : cell_items) eligible.push_back(cell);
  if (eligible.empty()) throw RejectionCapExceeded("no leaf cell contains any item");

  // distant, item-bearing cells per home cell, for tourist trips
  std::map<CellId, std::vector<CellId>> distant;
  for (const CellId& home_cell : eligible) {
    const GeoPoint home = centroid(home_cell, pyramid);
    auto& list = distant[home_cell];
    for (const CellId& other : eligible) {
      if (haversine_km(home, centroid(other, pyramid)) > kDistantCellKm) list.push_back(other);
    }
  }

  const Matrix log_gamma = log_gamma_matrix(params);
  const auto gamma_cdfs = topic_cdfs(log_gamma);

  bundle.homes.reserve(static_cast<std::size_t>(spec.n_users));
  for (std::int32_t u = 0; u < spec.n_users; ++u) {
    d.users.push_back(tagged("u", u));
    d.user_ids.emplace(d.users.back(), u);
    const CellId home_cell = eligible[uniform_below(rng, eligible.size())];
    const GeoPoint home = centroid(home_cell, pyramid);
    bundle.homes.push_back(home);
    const auto& away_cells = distant[home_cell];

    for (std::int32_t i = 0; i < spec.activities_per_user; ++i) {
      const bool tourist_trip = uniform01(rng) < spec.tourist_fraction;
      CellId cell = home_cell;
      if (tourist_trip) {
        if (away_cells.empty())
          throw RejectionCapExceeded("no item-bearing cell beyond the distance threshold");
        cell = away_cells[uniform_below(rng, away_cells.size())];
      }
      const std::int8_t role = tourist_trip ? 1 : 0;
      TopicVector probs = topic_logits(params, u, role, path_from_leaf(cell), pyramid.height);
      softmax_inplace(probs);
      const auto z = draw_categorical(rng, probs);

      // item ~ gamma_z, rejected until it falls inside the chosen cell
      std::int32_t item = -1;
      std::int64_t tries = 0;
      while (true) {
        if (++tries > kRejectionCap) {
          throw RejectionCapExceeded("item rejection cap exceeded; spec geometry infeasible");
        }
        const std::int32_t cand = draw_from_cdf(rng, gamma_cdfs[z]);
        if (cell_of(d.item_locations[static_cast<std::size_t>(cand)], pyramid.height, pyramid) ==
            cell) {
          item = cand;
          break;
        }
      }

      UserActivity act;
      act.user = u;
      act.item = item;
      act.location = d.item_locations[static_cast<std::size_t>(item)];
      act.words = d.item_words[static_cast<std::size_t>(item)];
      act.role = haversine_km(home, act.location) > bundle.d_km ? 1 : 0;
      bundle.activities.push_back(std::move(act));
    }
  }

  bundle.split_tags =
      split_tags(bundle.activities, spec.n_users, bundle.split_fraction, spec.seed);
  return bundle;
}

}  // namespace geosage
