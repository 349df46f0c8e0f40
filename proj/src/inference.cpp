#include "geosage/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <tuple>

#include "geosage/logmath.hpp"

namespace geosage {

namespace {

std::int32_t effective_height(const ModelParams& params) {
  return params.config.pyramid.height;
}

// Logits for a stats group; the path is rebuilt from the leaf cell.
TopicVector group_logits(const ModelParams& params, std::int32_t user, std::int8_t role,
                         const CellId& leaf) {
  return topic_logits(params, user, role, path_from_leaf(leaf), leaf.level);
}

double l1_norm_block(const std::map<std::int32_t, TopicVector>& block) {
  double s = 0.0;
  for (const auto& [key, vec] : block)
    for (double x : vec) s += std::abs(x);
  return s;
}

double l1_norm_block(const std::map<CellId, TopicVector>& block) {
  double s = 0.0;
  for (const auto& [key, vec] : block)
    for (double x : vec) s += std::abs(x);
  return s;
}

double l1_norm_matrix(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data) s += std::abs(x);
  return s;
}

double soft_threshold(double y, double t) {
  if (y > t) return y - t;
  if (y < -t) return y + t;
  return 0.0;
}

std::int64_t nnz_of(const Matrix& m) {
  std::int64_t n = 0;
  for (double x : m.data)
    if (x != 0.0) ++n;
  return n;
}

template <typename Key>
std::int64_t nnz_of(const std::map<Key, TopicVector>& block) {
  std::int64_t n = 0;
  for (const auto& [key, vec] : block)
    for (double x : vec)
      if (x != 0.0) ++n;
  return n;
}

}  // namespace

TrainingSet make_training_set(const CorpusBundle& bundle) {
  TrainingSet tset;
  tset.pyramid = bundle.pyramid;
  tset.dims = Dims{bundle.dicts.n_users(), bundle.dicts.n_items(), bundle.dicts.n_words()};
  for (std::size_t i = 0; i < bundle.activities.size(); ++i) {
    if (bundle.split_tags[i] != SplitTag::kTrain) continue;
    tset.activities.push_back(bundle.activities[i]);
    tset.leaves.push_back(cell_of(bundle.activities[i].location, bundle.pyramid.height,
                                  bundle.pyramid));
  }
  return tset;
}

TopicDistribution topic_posterior(const ModelParams& params, const UserActivity& activity) {
  const CellPath path = path_of(activity.location, params.config.pyramid);
  TopicVector logp = topic_logits(params, activity.user, activity.role, path,
                                  effective_height(params));
  softmax_inplace(logp);  // logits -> alpha
  for (double& p : logp) p = std::log(p);
  const Matrix log_beta = log_beta_matrix(params);
  const Matrix log_gamma = log_gamma_matrix(params);
  const auto k = static_cast<std::size_t>(params.config.topics);
  for (std::size_t z = 0; z < k; ++z) {
    for (std::int32_t w : activity.words) logp[z] += log_beta.at(z, static_cast<std::size_t>(w));
    logp[z] += log_gamma.at(z, static_cast<std::size_t>(activity.item));
  }
  softmax_inplace(logp);
  return TopicDistribution{std::move(logp)};
}

void gibbs_sweep(const ModelParams& params, const TrainingSet& tset,
                 TopicAssignment& assignments, Rng& rng) {
  const auto k = static_cast<std::size_t>(params.config.topics);
  const Matrix log_beta = log_beta_matrix(params);
  const Matrix log_gamma = log_gamma_matrix(params);

  // log alpha is shared by every activity with the same (user, role, leaf)
  std::map<std::tuple<std::int32_t, std::int8_t, CellId>, TopicVector> alpha_cache;
  std::vector<double> logp(k);
  for (std::size_t i = 0; i < tset.activities.size(); ++i) {
    const UserActivity& a = tset.activities[i];
    auto key = std::make_tuple(a.user, a.role, tset.leaves[i]);
    auto it = alpha_cache.find(key);
    if (it == alpha_cache.end()) {
      TopicVector eta = group_logits(params, a.user, a.role, tset.leaves[i]);
      const double lz = log_sum_exp(eta);
      for (double& x : eta) x -= lz;
      it = alpha_cache.emplace(std::move(key), std::move(eta)).first;
    }
    logp = it->second;
    for (std::size_t z = 0; z < k; ++z) {
      for (std::int32_t w : a.words) logp[z] += log_beta.at(z, static_cast<std::size_t>(w));
      logp[z] += log_gamma.at(z, static_cast<std::size_t>(a.item));
    }
    softmax_inplace(logp);
    assignments[i] = static_cast<std::int32_t>(draw_categorical(rng, logp));
  }
}

SufficientStats collect_stats(const TrainingSet& tset, const TopicAssignment& assignments,
                              std::int32_t topics) {
  SufficientStats stats;
  stats.topics = topics;
  stats.height = tset.pyramid.height;
  stats.n_activities = static_cast<double>(tset.size());
  const auto k = static_cast<std::size_t>(topics);
  stats.d_z.assign(k, 0.0);
  stats.d_zw = Matrix(k, static_cast<std::size_t>(tset.dims.n_words));
  stats.d_w.assign(static_cast<std::size_t>(tset.dims.n_words), 0.0);
  stats.d_zv = Matrix(k, static_cast<std::size_t>(tset.dims.n_items));
  stats.d_v.assign(static_cast<std::size_t>(tset.dims.n_items), 0.0);

  std::map<std::tuple<std::int32_t, std::int8_t, CellId>, TopicVector> group_counts;
  for (std::size_t i = 0; i < tset.activities.size(); ++i) {
    const UserActivity& a = tset.activities[i];
    const auto z = static_cast<std::size_t>(assignments[i]);
    stats.d_z[z] += 1.0;
    auto& uz = stats.d_uz[a.user];
    if (uz.empty()) uz.assign(k, 0.0);
    uz[z] += 1.0;
    const CellId leaf = tset.leaves[i];
    for (std::int32_t h = 1; h <= leaf.level; ++h) {
      auto& lz = (a.role == 0 ? stats.d_lz_native : stats.d_lz_tourist)[ancestor_at(leaf, h)];
      if (lz.empty()) lz.assign(k, 0.0);
      lz[z] += 1.0;
    }
    for (std::int32_t w : a.words) {
      stats.d_zw.at(z, static_cast<std::size_t>(w)) += 1.0;
      stats.d_w[static_cast<std::size_t>(w)] += 1.0;
    }
    stats.d_zv.at(z, static_cast<std::size_t>(a.item)) += 1.0;
    stats.d_v[static_cast<std::size_t>(a.item)] += 1.0;

    auto& gc = group_counts[std::make_tuple(a.user, a.role, leaf)];
    if (gc.empty()) gc.assign(k, 0.0);
    gc[z] += 1.0;
  }

  stats.tokens_per_topic.assign(k, 0.0);
  for (std::size_t z = 0; z < k; ++z) {
    const double* row = stats.d_zw.row(z);
    for (std::size_t w = 0; w < stats.d_zw.cols; ++w) stats.tokens_per_topic[z] += row[w];
  }

  stats.groups.reserve(group_counts.size());
  for (auto& [key, counts] : group_counts) {
    SufficientStats::Group g;
    g.user = std::get<0>(key);
    g.role = std::get<1>(key);
    g.leaf = std::get<2>(key);
    g.total = 0.0;
    for (double c : counts) g.total += c;
    g.topic_counts = std::move(counts);
    stats.groups.push_back(std::move(g));
  }
  return stats;
}

double complete_data_log_likelihood(const ModelParams& params, const SufficientStats& stats) {
  double ll = 0.0;
  for (const auto& g : stats.groups) {
    TopicVector eta = group_logits(params, g.user, g.role, g.leaf);
    const double lz = log_sum_exp(eta);
    for (std::size_t z = 0; z < eta.size(); ++z) {
      if (g.topic_counts[z] > 0.0) ll += g.topic_counts[z] * (eta[z] - lz);
    }
  }
  const Matrix log_beta = log_beta_matrix(params);
  for (std::size_t idx = 0; idx < stats.d_zw.data.size(); ++idx) {
    if (stats.d_zw.data[idx] > 0.0) ll += stats.d_zw.data[idx] * log_beta.data[idx];
  }
  const Matrix log_gamma = log_gamma_matrix(params);
  for (std::size_t idx = 0; idx < stats.d_zv.data.size(); ++idx) {
    if (stats.d_zv.data[idx] > 0.0) ll += stats.d_zv.data[idx] * log_gamma.data[idx];
  }
  return ll;
}

double penalized_objective(const ModelParams& params, const SufficientStats& stats,
                           double l1_weight) {
  double penalty = l1_norm_block(params.theta_user) + l1_norm_block(params.theta_native) +
                   l1_norm_block(params.theta_tourist) + l1_norm_matrix(params.phi_topic) +
                   l1_norm_matrix(params.psi_topic);
  return complete_data_log_likelihood(params, stats) - l1_weight * penalty;
}

Gradients gradients(const ModelParams& params, const SufficientStats& stats) {
  const auto k = static_cast<std::size_t>(stats.topics);
  const Variant variant = params.config.variant;
  Gradients g;
  g.theta0.assign(k, 0.0);

  // alpha-sum accumulators per gradient formula
  TopicVector alpha_total(k, 0.0);
  std::map<std::int32_t, TopicVector> alpha_user;
  std::map<CellId, TopicVector> alpha_native, alpha_tourist;

  std::vector<double> alpha_g(k);
  for (const auto& grp : stats.groups) {
    alpha_g = group_logits(params, grp.user, grp.role, grp.leaf);
    softmax_inplace(alpha_g);
    auto& au = alpha_user[grp.user];
    if (au.empty()) au.assign(k, 0.0);
    for (std::size_t z = 0; z < k; ++z) {
      const double w = grp.total * alpha_g[z];
      alpha_total[z] += w;
      au[z] += w;
    }
    auto add_to_cell = [&](std::map<CellId, TopicVector>& table, const CellId& cell) {
      auto& vec = table[cell];
      if (vec.empty()) vec.assign(k, 0.0);
      for (std::size_t z = 0; z < k; ++z) vec[z] += grp.total * alpha_g[z];
    };
    switch (variant) {
      case Variant::kS1:
        break;
      case Variant::kS2:
        for (std::int32_t h = 1; h <= grp.leaf.level; ++h)
          add_to_cell(alpha_native, ancestor_at(grp.leaf, h));
        break;
      case Variant::kS3:
        add_to_cell(grp.role == 0 ? alpha_native : alpha_tourist, grp.leaf);
        break;
      case Variant::kFull:
        for (std::int32_t h = 1; h <= grp.leaf.level; ++h)
          add_to_cell(grp.role == 0 ? alpha_native : alpha_tourist, ancestor_at(grp.leaf, h));
        break;
    }
  }

  for (std::size_t z = 0; z < k; ++z) g.theta0[z] = stats.d_z[z] - alpha_total[z];

  for (const auto& [user, asum] : alpha_user) {
    TopicVector grad(k, 0.0);
    auto it = stats.d_uz.find(user);
    for (std::size_t z = 0; z < k; ++z) {
      grad[z] = (it != stats.d_uz.end() ? it->second[z] : 0.0) - asum[z];
    }
    g.theta_user.emplace(user, std::move(grad));
  }

  auto count_at = [](const std::map<CellId, TopicVector>& table, const CellId& cell,
                     std::size_t z) {
    auto it = table.find(cell);
    return it != table.end() ? it->second[z] : 0.0;
  };
  auto cell_grads = [&](const std::map<CellId, TopicVector>& asums,
                        const std::map<CellId, TopicVector>* counts_a,
                        const std::map<CellId, TopicVector>* counts_b) {
    CellBlock out;
    for (const auto& [cell, asum] : asums) {
      TopicVector grad(k, 0.0);
      for (std::size_t z = 0; z < k; ++z) {
        double count = count_at(*counts_a, cell, z);
        if (counts_b != nullptr) count += count_at(*counts_b, cell, z);
        grad[z] = count - asum[z];
      }
      out.emplace(cell, std::move(grad));
    }
    return out;
  };
  if (variant == Variant::kS2) {
    g.theta_native = cell_grads(alpha_native, &stats.d_lz_native, &stats.d_lz_tourist);
  } else if (variant != Variant::kS1) {
    g.theta_native = cell_grads(alpha_native, &stats.d_lz_native, nullptr);
    g.theta_tourist = cell_grads(alpha_tourist, &stats.d_lz_tourist, nullptr);
  }

  // word blocks: the beta multiplier is the word-token total per topic
  const auto n_words = static_cast<std::size_t>(params.dims.n_words);
  const auto n_items = static_cast<std::size_t>(params.dims.n_items);
  g.phi0.assign(n_words, 0.0);
  g.phi_topic = Matrix(k, n_words);
  const Matrix log_beta = log_beta_matrix(params);
  for (std::size_t z = 0; z < k; ++z) {
    const double tokens = stats.tokens_per_topic[z];
    const double* lb = log_beta.row(z);
    double* gp = g.phi_topic.row(z);
    const double* dzw = stats.d_zw.row(z);
    for (std::size_t w = 0; w < n_words; ++w) {
      const double expected = tokens * std::exp(lb[w]);
      gp[w] = dzw[w] - expected;
      g.phi0[w] += dzw[w] - expected;
    }
  }

  // item blocks: one item per activity, so the multiplier is d(z)
  g.psi0.assign(n_items, 0.0);
  g.psi_topic = Matrix(k, n_items);
  const Matrix log_gamma = log_gamma_matrix(params);
  for (std::size_t z = 0; z < k; ++z) {
    const double dz = stats.d_z[z];
    const double* lg = log_gamma.row(z);
    double* gp = g.psi_topic.row(z);
    const double* dzv = stats.d_zv.row(z);
    for (std::size_t v = 0; v < n_items; ++v) {
      const double expected = dz * std::exp(lg[v]);
      gp[v] = dzv[v] - expected;
      g.psi0[v] += dzv[v] - expected;
    }
  }
  return g;
}

namespace {

// One proximal step at size t: plain ascent on backgrounds, soft-thresholded
// ascent on the penalized blocks. Map entries whose vectors become all-zero
// are dropped to keep the absent-means-zero contract.
ModelParams apply_step(const ModelParams& params, const Gradients& grad, double t, double lambda,
                       bool freeze_backgrounds) {
  ModelParams next = params;
  if (!freeze_backgrounds) {
    for (std::size_t z = 0; z < next.theta0.size(); ++z) next.theta0[z] += t * grad.theta0[z];
    for (std::size_t w = 0; w < next.phi0.size(); ++w) next.phi0[w] += t * grad.phi0[w];
    for (std::size_t v = 0; v < next.psi0.size(); ++v) next.psi0[v] += t * grad.psi0[v];
  }
  const double shrink = t * lambda;

  auto step_map = [&](auto& block, const auto& gblock) {
    for (const auto& [key, gvec] : gblock) {
      auto it = block.find(key);
      TopicVector next_vec(gvec.size(), 0.0);
      bool nonzero = false;
      for (std::size_t z = 0; z < gvec.size(); ++z) {
        const double x = it != block.end() ? it->second[z] : 0.0;
        next_vec[z] = soft_threshold(x + t * gvec[z], shrink);
        nonzero = nonzero || next_vec[z] != 0.0;
      }
      if (nonzero) {
        block.insert_or_assign(key, std::move(next_vec));
      } else if (it != block.end()) {
        block.erase(it);
      }
    }
    // keys with parameters but no gradient entry see a pure shrink
    for (auto it = block.begin(); it != block.end();) {
      if (gblock.find(it->first) == gblock.end()) {
        bool nonzero = false;
        for (double& x : it->second) {
          x = soft_threshold(x, shrink);
          nonzero = nonzero || x != 0.0;
        }
        it = nonzero ? std::next(it) : block.erase(it);
      } else {
        ++it;
      }
    }
  };
  step_map(next.theta_user, grad.theta_user);
  step_map(next.theta_native, grad.theta_native);
  step_map(next.theta_tourist, grad.theta_tourist);

  for (std::size_t idx = 0; idx < next.phi_topic.data.size(); ++idx) {
    next.phi_topic.data[idx] =
        soft_threshold(next.phi_topic.data[idx] + t * grad.phi_topic.data[idx], shrink);
  }
  for (std::size_t idx = 0; idx < next.psi_topic.data.size(); ++idx) {
    next.psi_topic.data[idx] =
        soft_threshold(next.psi_topic.data[idx] + t * grad.psi_topic.data[idx], shrink);
  }
  return next;
}

}  // namespace

MStepResult m_step(ModelParams& params, const SufficientStats& stats, const TrainOptions& opts,
                   double* step_hint) {
  const double lambda = opts.l1_weight;
  double objective = penalized_objective(params, stats, lambda);
  if (!std::isfinite(objective)) throw NonFiniteObjective("penalized objective is not finite");
  MStepResult result;
  result.objective_before = objective;

  double step = step_hint != nullptr && *step_hint > 0.0 ? *step_hint : 1.0;
  constexpr double kMinStep = 1e-14;
  constexpr double kMaxStep = 1e3;

  for (std::int32_t it = 0; it < opts.mstep_iters; ++it) {
    const Gradients grad = gradients(params, stats);
    bool accepted = false;
    while (step >= kMinStep) {
      ModelParams candidate = apply_step(params, grad, step, lambda, opts.freeze_backgrounds);
      const double cand_obj = penalized_objective(candidate, stats, lambda);
      if (!std::isfinite(cand_obj)) throw NonFiniteObjective("penalized objective is not finite");
      if (cand_obj >= objective) {
        params = std::move(candidate);
        objective = cand_obj;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++result.iterations;
    if (!accepted) break;            // no usable step left; keep current params
    step = std::min(step * 2.0, kMaxStep);
    if (step_hint != nullptr) *step_hint = step;
  }
  result.objective_after = objective;
  return result;
}

std::string format_trace(const TraceRecord& rec) {
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "iter=%d objective=%.9g mstep_before=%.9g nnz_theta_user=%lld "
                "nnz_theta_native=%lld nnz_theta_tourist=%lld nnz_phi_topic=%lld "
                "nnz_psi_topic=%lld wall_ms=%.1f",
                rec.iteration, rec.objective, rec.mstep_before,
                static_cast<long long>(rec.nnz_theta_user),
                static_cast<long long>(rec.nnz_theta_native),
                static_cast<long long>(rec.nnz_theta_tourist),
                static_cast<long long>(rec.nnz_phi_topic),
                static_cast<long long>(rec.nnz_psi_topic), rec.wall_ms);
  return buf;
}

TrainResult train(const CorpusBundle& bundle, const ModelConfig& cfg, const TrainOptions& opts) {
  TrainingSet tset = make_training_set(bundle);
  if (tset.activities.empty()) throw EmptyCorpus("training split is empty");

  ModelConfig config = cfg;
  config.pyramid = bundle.pyramid;
  config.d_km = bundle.d_km;
  config.l1_weight = opts.l1_weight;
  config.seed = opts.seed;

  ModelParams params = init_params(config, tset.dims);
  params.dict_hash = dict_hash(bundle.dicts);

  // Backgrounds start at the empirical log-frequencies (zero-mean shifted)
  // so topic deviations are discriminative from the first iteration.
  {
    std::vector<double> word_counts(static_cast<std::size_t>(tset.dims.n_words), 0.0);
    std::vector<double> item_counts(static_cast<std::size_t>(tset.dims.n_items), 0.0);
    for (const auto& a : tset.activities) {
      for (std::int32_t w : a.words) word_counts[static_cast<std::size_t>(w)] += 1.0;
      item_counts[static_cast<std::size_t>(a.item)] += 1.0;
    }
    auto log_shift = [](std::vector<double>& counts) {
      if (counts.empty()) return;
      double mean = 0.0;
      for (double& c : counts) {
        c = std::log1p(c);
        mean += c;
      }
      mean /= static_cast<double>(counts.size());
      for (double& c : counts) c -= mean;
    };
    log_shift(word_counts);
    log_shift(item_counts);
    params.phi0 = std::move(word_counts);
    params.psi0 = std::move(item_counts);
  }

  Rng rng(opts.seed);
  TopicAssignment assignments(tset.size(), 0);
  TrainResult result;
  double step_hint = 1.0;
  std::vector<double> objectives;
  const auto t_start = std::chrono::steady_clock::now();

  for (std::int32_t iter = 1; iter <= opts.em_iters; ++iter) {
    for (std::int32_t s = 0; s < opts.gibbs_sweeps_per_e; ++s) {
      gibbs_sweep(params, tset, assignments, rng);
    }
    SufficientStats stats = collect_stats(tset, assignments, config.topics);
    MStepResult mres = m_step(params, stats, opts, &step_hint);

    TraceRecord rec;
    rec.iteration = iter;
    rec.objective = mres.objective_after;
    rec.mstep_before = mres.objective_before;
    rec.nnz_theta_user = nnz_of(params.theta_user);
    rec.nnz_theta_native = nnz_of(params.theta_native);
    rec.nnz_theta_tourist = nnz_of(params.theta_tourist);
    rec.nnz_phi_topic = nnz_of(params.phi_topic);
    rec.nnz_psi_topic = nnz_of(params.psi_topic);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            t_start)
                      .count();
    result.trace.push_back(rec);
    objectives.push_back(mres.objective_after);

    const auto w = static_cast<std::size_t>(opts.convergence_window);
    if (objectives.size() >= 2 * w) {
      double ma_now = 0.0, ma_prev = 0.0;
      for (std::size_t j = 0; j < w; ++j) {
        ma_now += objectives[objectives.size() - 1 - j];
        ma_prev += objectives[objectives.size() - 1 - w - j];
      }
      ma_now /= static_cast<double>(w);
      ma_prev /= static_cast<double>(w);
      if (std::abs(ma_now - ma_prev) < opts.convergence_tol * std::max(1.0, std::abs(ma_prev)))
        break;
    }
  }
  result.params = std::move(params);
  return result;
}

}  // namespace geosage
