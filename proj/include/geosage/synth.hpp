#pragma once

#include <cstdint>

#include "geosage/corpus.hpp"
#include "geosage/model.hpp"

namespace geosage {

// Forward-sampling fixture: planted parameters plus a corpus drawn from them.
struct SynthSpec {
  std::int32_t n_users = 200;
  std::int32_t n_items = 300;
  std::int32_t vocab_size = 50;
  std::int32_t topics = 5;
  std::int32_t height = 3;
  std::int32_t activities_per_user = 50;
  double tourist_fraction = 0.3;
  double drift_strength = 2.0;  // native/tourist divergence; 0 makes them equal
  std::uint64_t seed = 1;
};

// The synthetic world lives in a fixed mid-continent box sized so that the
// 100 km evaluation radius spans several leaf cells at the default height.
BoundingBox synth_bbox();

// Planted ground-truth parameters: per-topic word/item deviations, user
// interest tilts, and per-cell native/tourist preferences whose divergence
// scales with drift_strength.
ModelParams make_params(const SynthSpec& spec);

// Samples a full corpus bundle from the planted parameters: items placed and
// described once, users homed at leaf-cell centroids, activities drawn as
// topic -> item (rejected into the chosen cell) with roles from the distance
// rule, then split with the standard 30% protocol.
CorpusBundle sample_corpus(const ModelParams& params, const SynthSpec& spec);

}  // namespace geosage
