#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geosage/corpus.hpp"
#include "geosage/eval.hpp"
#include "geosage/inference.hpp"
#include "geosage/model.hpp"
#include "geosage/recsys.hpp"
#include "geosage/synth.hpp"

namespace {

using namespace geosage;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open input file: " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open output file: " + path);
  return out;
}

CorpusBundle load_corpus_file(const std::string& path) {
  auto in = open_input(path);
  return load_corpus(in);
}

ModelParams load_model_file(const std::string& path) {
  auto in = open_input(path);
  return load_model(in);
}

std::vector<std::int32_t> parse_ks(const std::string& spec) {
  std::vector<std::int32_t> ks;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      ks.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw UsageError("bad --ks entry '" + tok + "'");
    }
    if (ks.back() < 1) throw UsageError("--ks entries must be >= 1");
  }
  if (ks.empty()) throw UsageError("--ks must list at least one cutoff");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

BoundingBox parse_bbox(const std::string& spec) {
  std::stringstream ss(spec);
  std::string tok;
  std::vector<double> vals;
  while (std::getline(ss, tok, ',')) {
    try {
      vals.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw UsageError("bad --bbox entry '" + tok + "'");
    }
  }
  if (vals.size() != 4) throw UsageError("--bbox expects min-lat,min-lon,max-lat,max-lon");
  return BoundingBox(GeoPoint(vals[0], vals[1]), GeoPoint(vals[2], vals[3]));
}

struct IngestArgs {
  std::string checkins, homes, out;
  std::string bbox = "24,-125,50,-66";
  std::int32_t height = 5;
  double d_km = 100.0;
  double split_fraction = 0.30;
  std::uint64_t seed = 0;
};

int run_ingest(const IngestArgs& args) {
  IngestOptions opts;
  opts.pyramid = PyramidConfig(parse_bbox(args.bbox), args.height);
  opts.d_km = args.d_km;
  opts.split_fraction = args.split_fraction;
  opts.seed = args.seed;
  if (opts.split_fraction <= 0.0 || opts.split_fraction >= 1.0)
    throw UsageError("--split-fraction must be in (0, 1)");

  std::unordered_map<std::string, GeoPoint> homes;
  if (!args.homes.empty()) {
    auto in = open_input(args.homes);
    homes = parse_homes(in);
  }
  auto in = open_input(args.checkins);
  CorpusBundle bundle = ingest(in, homes, opts);
  auto out = open_output(args.out);
  save_corpus(bundle, out);

  const SplitDataset view = bundle.split_view();
  std::fprintf(stderr,
               "ingested %zu activities (%d users, %d items, %d words); "
               "train=%zu test_home=%zu test_out=%zu; skipped %u malformed, "
               "%u out-of-bbox; %u role mismatches, %u location conflicts\n",
               bundle.activities.size(), bundle.dicts.n_users(), bundle.dicts.n_items(),
               bundle.dicts.n_words(), view.train.size(), view.test_home.size(),
               view.test_out.size(), bundle.stats.malformed_skipped,
               bundle.stats.dropped_out_of_bbox, bundle.stats.role_mismatches,
               bundle.stats.location_conflicts);
  return 0;
}

struct TrainArgs {
  std::string corpus, out, trace;
  std::int32_t k = 50;
  std::string variant = "full";
  TrainOptions opts;
};

int run_train(const TrainArgs& args) {
  CorpusBundle bundle = load_corpus_file(args.corpus);
  ModelConfig cfg;
  cfg.topics = args.k;
  cfg.variant = variant_from_string(args.variant);
  if (cfg.topics < 1) throw UsageError("--k must be >= 1");

  TrainResult result = train(bundle, cfg, args.opts);
  auto out = open_output(args.out);
  save_model(result.params, out);

  std::ofstream trace_file;
  std::ostream* trace_out = nullptr;
  if (!args.trace.empty()) {
    trace_file = open_output(args.trace);
    trace_out = &trace_file;
  }
  for (const auto& rec : result.trace) {
    if (trace_out != nullptr) *trace_out << format_trace(rec) << "\n";
  }
  std::fprintf(stderr, "trained %s model: K=%d, %zu EM iterations, final objective %.6f\n",
               to_string(cfg.variant).c_str(), cfg.topics, result.trace.size(),
               result.trace.empty() ? 0.0 : result.trace.back().objective);
  return 0;
}

struct EvalArgs {
  std::string model, corpus, dump_ranks;
  std::string scenario = "out";
  std::string ks = "2,6,10,14,18";
  std::string baseline;
  std::int32_t cold_start_max = -1;
  double radius_km = -1.0;
  std::uint64_t seed = 0;
};

int run_evaluate(const EvalArgs& args) {
  CorpusBundle bundle = load_corpus_file(args.corpus);
  const Scenario scenario = scenario_from_string(args.scenario);
  const auto ks = parse_ks(args.ks);
  std::optional<std::int32_t> cold;
  if (args.cold_start_max >= 0) cold = args.cold_start_max;
  std::optional<double> radius;
  if (args.radius_km > 0.0) radius = args.radius_km;

  EvalReport report;
  if (!args.baseline.empty()) {
    report = evaluate_baseline(baseline_from_string(args.baseline), bundle, scenario, ks,
                               args.seed, cold, radius);
  } else {
    ModelParams params = load_model_file(args.model);
    report = evaluate(params, bundle, scenario, ks, cold, radius, !args.dump_ranks.empty());
  }
  std::fputs(format_report(report).c_str(), stdout);
  if (!args.dump_ranks.empty() && report.per_case_ranks) {
    auto out = open_output(args.dump_ranks);
    for (std::size_t i = 0; i < report.per_case_ranks->size(); ++i) {
      out << i << "\t" << (*report.per_case_ranks)[i] << "\n";
    }
  }
  return 0;
}

struct RecommendArgs {
  std::string model, corpus, user;
  double lat = 0.0, lon = 0.0;
  std::int32_t k = 10;
  double radius_km = 100.0;
  std::int32_t zoom = 0;
  std::string cold_role = "tourist";
  bool explain = false;
};

int run_recommend(const RecommendArgs& args) {
  ModelParams params = load_model_file(args.model);
  CorpusBundle bundle = load_corpus_file(args.corpus);
  Query query;
  query.location = GeoPoint(args.lat, args.lon);
  query.k = args.k;
  query.radius_km = args.radius_km;
  query.zoom_level = args.zoom;
  if (query.k < 1) throw UsageError("--k must be >= 1");
  if (args.zoom < 0 || args.zoom > bundle.pyramid.height)
    throw UsageError("--zoom must be in [1, height]");

  auto it = bundle.dicts.user_ids.find(args.user);
  query.user = it != bundle.dicts.user_ids.end() ? it->second : kColdUser;
  std::int32_t cold_role;
  if (args.cold_role == "tourist") {
    cold_role = 1;
  } else if (args.cold_role == "local") {
    cold_role = 0;
  } else {
    throw UsageError("--cold-role must be local or tourist");
  }

  const SpatialItemIndex index(bundle.dicts, bundle.pyramid);
  RankedList list = recommend(params, bundle, index, query, cold_role);

  std::optional<GeoPoint> home;
  if (query.user != kColdUser) home = bundle.homes[static_cast<std::size_t>(query.user)];
  const std::int32_t role = role_for_query(home, query.location, params.config.d_km, cold_role);
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    std::printf("%zu\t%s\t%.12g\n", i + 1,
                bundle.dicts.items[static_cast<std::size_t>(list.entries[i].first)].c_str(),
                list.entries[i].second);
  }
  if (args.explain && !list.entries.empty()) {
    const std::int32_t top = list.entries.front().first;
    const CellPath path = path_of(query.location, params.config.pyramid);
    const ItemScorer scorer(params, query.user, role, path, query.zoom_level);
    const auto terms = scorer.explain(top, bundle.dicts.item_words[static_cast<std::size_t>(top)]);
    std::printf("# explain item=%s role=%s user=%s\n",
                bundle.dicts.items[static_cast<std::size_t>(top)].c_str(),
                role == 1 ? "tourist" : "local",
                query.user == kColdUser ? "(cold)" : args.user.c_str());
    for (std::size_t z = 0; z < terms.size(); ++z) {
      std::printf("# topic=%zu alpha=%.6g content=%.6g gamma=%.6g\n", z, terms[z].alpha,
                  terms[z].content, terms[z].gamma);
    }
  }
  return 0;
}

struct SynthArgs {
  std::string out_corpus, out_truth;
  SynthSpec spec;
};

int run_synth(const SynthArgs& args) {
  if (args.spec.n_users < 1 || args.spec.n_items < 1 || args.spec.vocab_size < 1 ||
      args.spec.topics < 1 || args.spec.height < 1 || args.spec.activities_per_user < 1)
    throw UsageError("synth counts must all be >= 1");
  if (args.spec.tourist_fraction < 0.0 || args.spec.tourist_fraction > 1.0)
    throw UsageError("--tourist-fraction must be in [0, 1]");
  if (args.spec.drift_strength < 0.0) throw UsageError("--drift must be >= 0");

  ModelParams truth = make_params(args.spec);
  CorpusBundle bundle = sample_corpus(truth, args.spec);
  truth.dict_hash = dict_hash(bundle.dicts);
  {
    auto out = open_output(args.out_corpus);
    save_corpus(bundle, out);
  }
  if (!args.out_truth.empty()) {
    auto out = open_output(args.out_truth);
    save_model(truth, out);
  }
  std::fprintf(stderr, "sampled %zu activities for %d users over %d items\n",
               bundle.activities.size(), args.spec.n_users, args.spec.n_items);
  return 0;
}

struct InspectArgs {
  std::string model, corpus;
  std::int32_t topic = 0;
};

int run_inspect(const InspectArgs& args) {
  ModelParams params = load_model_file(args.model);
  CorpusBundle bundle = load_corpus_file(args.corpus);
  if (params.dict_hash != dict_hash(bundle.dicts))
    throw DictMismatch("model was trained against different dictionaries");
  if (args.topic < 0 || args.topic >= params.config.topics)
    throw UsageError("--topic must be in [0, K)");

  auto top10 = [](const std::vector<double>& probs) {
    std::vector<std::int32_t> idx(probs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int32_t>(i);
    std::sort(idx.begin(), idx.end(), [&](std::int32_t a, std::int32_t b) {
      if (probs[static_cast<std::size_t>(a)] != probs[static_cast<std::size_t>(b)])
        return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
      return a < b;
    });
    if (idx.size() > 10) idx.resize(10);
    return idx;
  };

  const auto word_probs = beta(params, args.topic);
  std::printf("topic %d: top words\n", args.topic);
  for (std::int32_t w : top10(word_probs)) {
    std::printf("  %s\t%.6g\n", bundle.dicts.vocab[static_cast<std::size_t>(w)].c_str(),
                word_probs[static_cast<std::size_t>(w)]);
  }
  const auto item_probs = gamma_items(params, args.topic);
  std::printf("topic %d: top items\n", args.topic);
  for (std::int32_t v : top10(item_probs)) {
    std::printf("  %s\t%.6g\n", bundle.dicts.items[static_cast<std::size_t>(v)].c_str(),
                item_probs[static_cast<std::size_t>(v)]);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geo-SAGE spatial item recommendation"};
  app.require_subcommand(1);

  IngestArgs ingest_args;
  auto* ingest_cmd = app.add_subcommand("ingest", "build a corpus bundle from check-in lines");
  ingest_cmd->add_option("--checkins", ingest_args.checkins, "check-in file")->required();
  ingest_cmd->add_option("--homes", ingest_args.homes, "optional explicit homes file");
  ingest_cmd->add_option("--bbox", ingest_args.bbox, "min-lat,min-lon,max-lat,max-lon");
  ingest_cmd->add_option("--height", ingest_args.height, "pyramid height H");
  ingest_cmd->add_option("--d-km", ingest_args.d_km, "local/tourist distance threshold");
  ingest_cmd->add_option("--split-fraction", ingest_args.split_fraction, "per-user test share");
  ingest_cmd->add_option("--seed", ingest_args.seed, "split seed");
  ingest_cmd->add_option("--out", ingest_args.out, "output corpus bundle")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "fit a Geo-SAGE model with Gibbs-EM");
  train_cmd->add_option("--corpus", train_args.corpus, "corpus bundle")->required();
  train_cmd->add_option("--out", train_args.out, "output model file")->required();
  train_cmd->add_option("--k", train_args.k, "number of topics");
  train_cmd->add_option("--variant", train_args.variant, "full|s1|s2|s3");
  train_cmd->add_option("--l1", train_args.opts.l1_weight, "L1 weight on deviation blocks");
  train_cmd->add_option("--em-iters", train_args.opts.em_iters, "max EM iterations");
  train_cmd->add_option("--gibbs-sweeps", train_args.opts.gibbs_sweeps_per_e, "sweeps per E-step");
  train_cmd->add_option("--mstep-iters", train_args.opts.mstep_iters, "M-step iterations");
  train_cmd->add_option("--tol", train_args.opts.convergence_tol, "relative convergence tol");
  train_cmd->add_option("--seed", train_args.opts.seed, "training seed");
  train_cmd->add_option("--trace", train_args.trace, "write per-iteration trace to file");
  train_cmd->add_flag("--freeze-backgrounds", train_args.opts.freeze_backgrounds,
                      "keep theta0/phi0/psi0 at initialization");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Recall@k over a test scenario");
  eval_cmd->add_option("--model", eval_args.model, "model file");
  eval_cmd->add_option("--corpus", eval_args.corpus, "corpus bundle")->required();
  eval_cmd->add_option("--scenario", eval_args.scenario, "home|out");
  eval_cmd->add_option("--ks", eval_args.ks, "comma-separated cutoffs");
  eval_cmd->add_option("--cold-start-max", eval_args.cold_start_max,
                       "only users with <= this many training activities");
  eval_cmd->add_option("--radius-km", eval_args.radius_km, "candidate radius (default d)");
  eval_cmd->add_option("--baseline", eval_args.baseline, "random|popularity instead of a model");
  eval_cmd->add_option("--seed", eval_args.seed, "seed for the random baseline");
  eval_cmd->add_option("--dump-ranks", eval_args.dump_ranks, "write per-case ranks to file");

  RecommendArgs rec_args;
  auto* rec_cmd = app.add_subcommand("recommend", "top-k items for a user at a location");
  rec_cmd->add_option("--model", rec_args.model, "model file")->required();
  rec_cmd->add_option("--corpus", rec_args.corpus, "corpus bundle")->required();
  rec_cmd->add_option("--user", rec_args.user, "user id string")->required();
  rec_cmd->add_option("--lat", rec_args.lat, "query latitude")->required();
  rec_cmd->add_option("--lon", rec_args.lon, "query longitude")->required();
  rec_cmd->add_option("--k", rec_args.k, "list length");
  rec_cmd->add_option("--radius-km", rec_args.radius_km, "candidate radius");
  rec_cmd->add_option("--zoom", rec_args.zoom, "pyramid level to smooth up to (default H)");
  rec_cmd->add_option("--cold-role", rec_args.cold_role, "role for unknown users: local|tourist");
  rec_cmd->add_flag("--explain", rec_args.explain, "print per-topic scores for the top item");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "sample a synthetic corpus with known truth");
  synth_cmd->add_option("--users", synth_args.spec.n_users, "number of users");
  synth_cmd->add_option("--items", synth_args.spec.n_items, "number of items");
  synth_cmd->add_option("--vocab", synth_args.spec.vocab_size, "vocabulary size");
  synth_cmd->add_option("--k", synth_args.spec.topics, "number of topics");
  synth_cmd->add_option("--height", synth_args.spec.height, "pyramid height");
  synth_cmd->add_option("--acts-per-user", synth_args.spec.activities_per_user,
                        "activities per user");
  synth_cmd->add_option("--tourist-fraction", synth_args.spec.tourist_fraction,
                        "share of out-of-town trips");
  synth_cmd->add_option("--drift", synth_args.spec.drift_strength, "native/tourist divergence");
  synth_cmd->add_option("--seed", synth_args.spec.seed, "generation seed");
  synth_cmd->add_option("--out-corpus", synth_args.out_corpus, "output corpus bundle")->required();
  synth_cmd->add_option("--out-truth", synth_args.out_truth, "output ground-truth model");

  InspectArgs inspect_args;
  auto* inspect_cmd = app.add_subcommand("inspect", "top words/items of a topic");
  inspect_cmd->add_option("--model", inspect_args.model, "model file")->required();
  inspect_cmd->add_option("--corpus", inspect_args.corpus, "corpus bundle")->required();
  inspect_cmd->add_option("--topic", inspect_args.topic, "topic index");

  try {
    app.parse(argc, argv);
    if (ingest_cmd->parsed()) return run_ingest(ingest_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) {
      if (eval_args.baseline.empty() && eval_args.model.empty())
        throw UsageError("evaluate needs --model or --baseline");
      return run_evaluate(eval_args);
    }
    if (rec_cmd->parsed()) return run_recommend(rec_args);
    if (synth_cmd->parsed()) return run_synth(synth_args);
    if (inspect_cmd->parsed()) return run_inspect(inspect_args);
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "error[usage]: %s\n", e.what());
    return 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error[usage]: %s\n", e.what());
    return 1;
  } catch (const InternalError& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error[data]: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 3;
  }
}
