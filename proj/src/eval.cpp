#include "geosage/eval.hpp"

#include <algorithm>
#include <cstdio>

#include "geosage/rng.hpp"

namespace geosage {

namespace {

std::string slice_name(std::optional<std::int32_t> cold_start_max) {
  if (!cold_start_max) return "all";
  return "cold<=" + std::to_string(*cold_start_max);
}

// Candidates for one test case: the truth item plus unvisited items within
// the radius around the truth's location. Returns (candidates, truth index).
std::vector<std::int32_t> case_candidates(const SpatialItemIndex& index,
                                          const UserActivity& test_case,
                                          const std::vector<std::int32_t>& visits,
                                          const GeoPoint& truth_location, double radius_km) {
  std::vector<std::int32_t> cands =
      index.within_radius(truth_location, radius_km, visits);
  if (!std::binary_search(cands.begin(), cands.end(), test_case.item)) {
    cands.push_back(test_case.item);
    std::sort(cands.begin(), cands.end());
  }
  return cands;
}

std::int32_t rank_from_scores(const std::vector<std::int32_t>& cands,
                              const std::vector<double>& scores, std::int32_t truth_item) {
  double truth_score = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (cands[i] == truth_item) {
      truth_score = scores[i];
      break;
    }
  }
  std::int32_t rank = 1;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (cands[i] != truth_item && scores[i] > truth_score) ++rank;
  }
  return rank;
}

struct CaseFilter {
  std::optional<std::int32_t> cold_start_max;
  std::vector<std::int32_t> train_counts;

  bool keep(const UserActivity& a) const {
    if (!cold_start_max) return true;
    return train_counts[static_cast<std::size_t>(a.user)] <= *cold_start_max;
  }
};

}  // namespace

std::string to_string(Scenario s) { return s == Scenario::kHome ? "home" : "out"; }

Scenario scenario_from_string(const std::string& s) {
  if (s == "home") return Scenario::kHome;
  if (s == "out") return Scenario::kOut;
  throw UsageError("unknown scenario '" + s + "' (expected home|out)");
}

std::string to_string(BaselineKind k) {
  return k == BaselineKind::kRandom ? "random" : "popularity";
}

BaselineKind baseline_from_string(const std::string& s) {
  if (s == "random") return BaselineKind::kRandom;
  if (s == "popularity") return BaselineKind::kPopularity;
  throw UsageError("unknown baseline '" + s + "' (expected random|popularity)");
}

std::int32_t rank_of_truth(const ModelParams& params, const CorpusBundle& bundle,
                           const SpatialItemIndex& index, const UserActivity& test_case,
                           const std::vector<std::int32_t>& user_train_visits, double radius_km) {
  const GeoPoint& truth_loc =
      bundle.dicts.item_locations[static_cast<std::size_t>(test_case.item)];
  const std::vector<std::int32_t> cands =
      case_candidates(index, test_case, user_train_visits, truth_loc, radius_km);
  const CellPath path = path_of(truth_loc, params.config.pyramid);
  const ItemScorer scorer(params, test_case.user, test_case.role, path, 0);
  std::vector<double> scores(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    scores[i] =
        scorer.score(cands[i], bundle.dicts.item_words[static_cast<std::size_t>(cands[i])]);
  }
  return rank_from_scores(cands, scores, test_case.item);
}

EvalReport recall_at_k(const std::vector<std::int32_t>& ranks,
                       const std::vector<std::int32_t>& ks) {
  if (ranks.empty()) throw EmptyTestSet("no test cases to evaluate");
  EvalReport report;
  report.n_cases = static_cast<std::int32_t>(ranks.size());
  for (std::int32_t k : ks) {
    std::int32_t hits = 0;
    for (std::int32_t r : ranks)
      if (r <= k) ++hits;
    report.recall_at[k] = static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  return report;
}

EvalReport evaluate(const ModelParams& params, const CorpusBundle& bundle, Scenario scenario,
                    const std::vector<std::int32_t>& ks,
                    std::optional<std::int32_t> cold_start_max,
                    std::optional<double> radius_km, bool keep_ranks) {
  if (params.dict_hash != dict_hash(bundle.dicts)) {
    throw DictMismatch("model was trained against different dictionaries");
  }
  const SpatialItemIndex index(bundle.dicts, bundle.pyramid);
  const auto visits = training_visits(bundle);
  const double radius = radius_km.value_or(bundle.d_km);
  const SplitDataset splitd = bundle.split_view();
  const auto& cases = scenario == Scenario::kHome ? splitd.test_home : splitd.test_out;
  CaseFilter filter{cold_start_max, cold_start_max ? training_activity_counts(bundle)
                                                   : std::vector<std::int32_t>{}};

  std::vector<std::int32_t> ranks;
  for (const auto& test_case : cases) {
    if (!filter.keep(test_case)) continue;
    ranks.push_back(rank_of_truth(params, bundle, index, test_case,
                                  visits[static_cast<std::size_t>(test_case.user)], radius));
  }
  EvalReport report = recall_at_k(ranks, ks);
  report.scenario = scenario;
  report.slice = slice_name(cold_start_max);
  if (keep_ranks) report.per_case_ranks = std::move(ranks);
  return report;
}

std::vector<double> baseline_score(BaselineKind kind,
                                   const std::vector<std::int32_t>& candidate_items,
                                   const std::vector<double>& item_popularity,
                                   std::uint64_t case_seed) {
  std::vector<double> scores(candidate_items.size());
  if (kind == BaselineKind::kPopularity) {
    for (std::size_t i = 0; i < candidate_items.size(); ++i) {
      scores[i] = item_popularity[static_cast<std::size_t>(candidate_items[i])];
    }
  } else {
    Rng rng(case_seed);
    for (double& s : scores) s = uniform01(rng);
  }
  return scores;
}

std::vector<double> item_popularity(const CorpusBundle& bundle) {
  std::vector<double> pop(static_cast<std::size_t>(bundle.dicts.n_items()), 0.0);
  for (std::size_t i = 0; i < bundle.activities.size(); ++i) {
    if (bundle.split_tags[i] == SplitTag::kTrain)
      pop[static_cast<std::size_t>(bundle.activities[i].item)] += 1.0;
  }
  return pop;
}

EvalReport evaluate_baseline(BaselineKind kind, const CorpusBundle& bundle, Scenario scenario,
                             const std::vector<std::int32_t>& ks, std::uint64_t seed,
                             std::optional<std::int32_t> cold_start_max,
                             std::optional<double> radius_km) {
  const SpatialItemIndex index(bundle.dicts, bundle.pyramid);
  const auto visits = training_visits(bundle);
  const auto popularity = item_popularity(bundle);
  const double radius = radius_km.value_or(bundle.d_km);
  const SplitDataset splitd = bundle.split_view();
  const auto& cases = scenario == Scenario::kHome ? splitd.test_home : splitd.test_out;
  CaseFilter filter{cold_start_max, cold_start_max ? training_activity_counts(bundle)
                                                   : std::vector<std::int32_t>{}};

  std::vector<std::int32_t> ranks;
  std::uint64_t case_index = 0;
  for (const auto& test_case : cases) {
    ++case_index;
    if (!filter.keep(test_case)) continue;
    const GeoPoint& truth_loc =
        bundle.dicts.item_locations[static_cast<std::size_t>(test_case.item)];
    const auto cands =
        case_candidates(index, test_case, visits[static_cast<std::size_t>(test_case.user)],
                        truth_loc, radius);
    const auto scores =
        baseline_score(kind, cands, popularity, seed * 0x9e3779b97f4a7c15ULL + case_index);
    ranks.push_back(rank_from_scores(cands, scores, test_case.item));
  }
  EvalReport report = recall_at_k(ranks, ks);
  report.scenario = scenario;
  report.slice = slice_name(cold_start_max);
  return report;
}

std::string format_report(const EvalReport& report) {
  std::string out;
  char buf[160];
  for (const auto& [k, recall] : report.recall_at) {
    std::snprintf(buf, sizeof(buf), "scenario=%s slice=%s k=%d recall=%.6f n_cases=%d\n",
                  to_string(report.scenario).c_str(), report.slice.c_str(), k, recall,
                  report.n_cases);
    out += buf;
  }
  return out;
}

}  // namespace geosage
