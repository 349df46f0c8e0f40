#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geosage/corpus.hpp"
#include "geosage/model.hpp"
#include "geosage/recsys.hpp"

namespace geosage {

enum class Scenario : std::uint8_t { kHome = 0, kOut = 1 };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct EvalReport {
  Scenario scenario = Scenario::kOut;
  std::string slice = "all";               // cold-start filter descriptor
  std::map<std::int32_t, double> recall_at;
  std::int32_t n_cases = 0;
  std::optional<std::vector<std::int32_t>> per_case_ranks;
};

// One test case ranked: candidates are the truth item plus every item within
// radius_km of the truth's location not visited by the user in training.
// Rank is 1 + the number of candidates scoring strictly higher than truth.
std::int32_t rank_of_truth(const ModelParams& params, const CorpusBundle& bundle,
                           const SpatialItemIndex& index, const UserActivity& test_case,
                           const std::vector<std::int32_t>& user_train_visits, double radius_km);

// recall_at[k] = |{rank <= k}| / n_cases.
EvalReport recall_at_k(const std::vector<std::int32_t>& ranks,
                       const std::vector<std::int32_t>& ks);

inline const std::vector<std::int32_t> kDefaultKs = {2, 6, 10, 14, 18};

// Runs the scenario's test set through rank_of_truth. cold_start_max, when
// set, keeps only cases whose user has at most that many training activities
// (0 selects users with no training records at all).
EvalReport evaluate(const ModelParams& params, const CorpusBundle& bundle, Scenario scenario,
                    const std::vector<std::int32_t>& ks,
                    std::optional<std::int32_t> cold_start_max = std::nullopt,
                    std::optional<double> radius_km = std::nullopt,
                    bool keep_ranks = false);

enum class BaselineKind : std::uint8_t { kRandom = 0, kPopularity = 1 };

std::string to_string(BaselineKind k);
BaselineKind baseline_from_string(const std::string& s);

// Scores aligned with candidate_items: seeded uniforms, or each item's
// training visit count.
std::vector<double> baseline_score(BaselineKind kind,
                                   const std::vector<std::int32_t>& candidate_items,
                                   const std::vector<double>& item_popularity,
                                   std::uint64_t case_seed);

// Same protocol as evaluate but with baseline scores instead of the model.
EvalReport evaluate_baseline(BaselineKind kind, const CorpusBundle& bundle, Scenario scenario,
                             const std::vector<std::int32_t>& ks, std::uint64_t seed,
                             std::optional<std::int32_t> cold_start_max = std::nullopt,
                             std::optional<double> radius_km = std::nullopt);

// Training visit count per item id (the popularity baseline's score table).
std::vector<double> item_popularity(const CorpusBundle& bundle);

// One line per (scenario, slice, k).
std::string format_report(const EvalReport& report);

}  // namespace geosage
