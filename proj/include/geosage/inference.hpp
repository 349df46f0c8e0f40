#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "geosage/corpus.hpp"
#include "geosage/model.hpp"
#include "geosage/rng.hpp"

namespace geosage {

// Training split with leaf cells resolved once up front.
struct TrainingSet {
  std::vector<UserActivity> activities;
  std::vector<CellId> leaves;  // leaf cell per activity
  Dims dims;
  PyramidConfig pyramid;

  std::size_t size() const { return activities.size(); }
};

TrainingSet make_training_set(const CorpusBundle& bundle);

// One topic per training activity, indexed by position in the training set.
using TopicAssignment = std::vector<std::int32_t>;

// Count tables driving the M-step. The alpha part of the likelihood depends
// on an activity only through (user, role, leaf cell), so those assignments
// are kept grouped; everything else is a plain count table.
struct SufficientStats {
  struct Group {
    std::int32_t user = 0;
    std::int8_t role = 0;
    CellId leaf;
    std::vector<double> topic_counts;  // assignments per topic within the group
    double total = 0.0;
  };

  std::int32_t topics = 0;
  std::int32_t height = 0;
  double n_activities = 0.0;

  std::vector<double> d_z;                    // activities per topic
  std::map<std::int32_t, TopicVector> d_uz;   // per-user topic counts
  std::map<CellId, TopicVector> d_lz_native;  // per path cell, local activities
  std::map<CellId, TopicVector> d_lz_tourist; // per path cell, tourist activities
  Matrix d_zw;                                // word tokens per (topic, word)
  std::vector<double> d_w;                    // word tokens per word
  Matrix d_zv;                                // activities per (topic, item)
  std::vector<double> d_v;                    // activities per item
  std::vector<double> tokens_per_topic;       // row sums of d_zw

  std::vector<Group> groups;  // sorted by (user, role, leaf)
};

struct TrainOptions {
  std::int32_t em_iters = 200;
  std::int32_t gibbs_sweeps_per_e = 1;
  std::int32_t mstep_iters = 20;
  double l1_weight = 0.1;
  double convergence_tol = 1e-4;  // relative moving-average change
  std::int32_t convergence_window = 5;
  std::uint64_t seed = 0;
  bool freeze_backgrounds = false;
};

// P(z | activity, params): alpha * prod_n beta * gamma, normalized over z.
// The word factor is the plain product (training-time form, no geometric
// mean); an empty word set contributes an empty product.
TopicDistribution topic_posterior(const ModelParams& params, const UserActivity& activity);

// Redraws every assignment from its posterior, ascending activity index.
void gibbs_sweep(const ModelParams& params, const TrainingSet& tset,
                 TopicAssignment& assignments, Rng& rng);

SufficientStats collect_stats(const TrainingSet& tset, const TopicAssignment& assignments,
                              std::int32_t topics);

// Complete-data log-likelihood (no penalty) evaluated from the stats.
double complete_data_log_likelihood(const ModelParams& params, const SufficientStats& stats);

// Log-likelihood minus l1_weight times the L1 norm of the deviation blocks.
double penalized_objective(const ModelParams& params, const SufficientStats& stats,
                           double l1_weight);

// Analytic gradients of the unpenalized log-likelihood, one block per
// parameter block. Only blocks the active variant uses are populated.
struct Gradients {
  TopicVector theta0;
  UserBlock theta_user;
  CellBlock theta_native;
  CellBlock theta_tourist;
  std::vector<double> phi0;
  Matrix phi_topic;
  std::vector<double> psi0;
  Matrix psi_topic;
};

Gradients gradients(const ModelParams& params, const SufficientStats& stats);

struct MStepResult {
  double objective_before = 0.0;
  double objective_after = 0.0;
  std::int32_t iterations = 0;
};

// Proximal gradient ascent with backtracking: plain steps on the background
// blocks, soft-thresholded steps on the penalized ones. A step is accepted
// only if it does not decrease the penalized objective, so the objective is
// non-decreasing across the whole call. step_hint carries the adaptive step
// size between calls.
MStepResult m_step(ModelParams& params, const SufficientStats& stats, const TrainOptions& opts,
                   double* step_hint = nullptr);

struct TraceRecord {
  std::int32_t iteration = 0;
  double objective = 0.0;         // penalized objective after the M-step
  double mstep_before = 0.0;      // penalized objective entering the M-step
  std::int64_t nnz_theta_user = 0;
  std::int64_t nnz_theta_native = 0;
  std::int64_t nnz_theta_tourist = 0;
  std::int64_t nnz_phi_topic = 0;
  std::int64_t nnz_psi_topic = 0;
  double wall_ms = 0.0;
};

std::string format_trace(const TraceRecord& rec);

struct TrainResult {
  ModelParams params;
  std::vector<TraceRecord> trace;
};

// Gibbs-EM: alternate posterior redraws of the assignments with proximal
// ascent on the parameters until the moving-average objective stabilizes.
TrainResult train(const CorpusBundle& bundle, const ModelConfig& cfg, const TrainOptions& opts);

}  // namespace geosage
