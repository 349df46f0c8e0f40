#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "geosage/geo.hpp"

namespace geosage {

// Sentinel user id for queries about users unseen at training time; their
// personal interest block is an exact zero vector.
inline constexpr std::int32_t kColdUser = -1;

enum class Variant : std::uint8_t {
  kFull = 0,  // role-aware crowd preference smoothed over the pyramid
  kS1 = 1,    // no crowd preference at all
  kS2 = 2,    // role-agnostic crowd preference, still smoothed
  kS3 = 3,    // role-aware but leaf cell only, no smoothing
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelConfig {
  std::int32_t topics = 10;          // K
  Variant variant = Variant::kFull;
  double l1_weight = 0.1;
  double d_km = 100.0;               // local/tourist distance threshold
  std::uint64_t seed = 0;
  PyramidConfig pyramid;             // carries the bounding box and height H
};

struct Dims {
  std::int32_t n_users = 0;
  std::int32_t n_items = 0;
  std::int32_t n_words = 0;

  friend bool operator==(const Dims&, const Dims&) = default;
};

// Dense row-major matrix, used for the topic-by-word and topic-by-item blocks.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

using TopicVector = std::vector<double>;               // length K
using UserBlock = std::map<std::int32_t, TopicVector>; // absent key == zero vector
using CellBlock = std::map<CellId, TopicVector>;       // absent key == zero vector

// All natural parameters. Deviation blocks (theta_user, theta_native,
// theta_tourist, phi_topic, psi_topic) are L1-penalized during training and
// sparse: absent map entries and exact matrix zeros mean "no deviation".
// Under variant s2 theta_native stores the role-agnostic crowd block and
// theta_tourist stays empty.
struct ModelParams {
  TopicVector theta0;        // background topic preference, length K
  UserBlock theta_user;      // per-user topic interests
  CellBlock theta_native;    // per-cell native preference, levels 1..H
  CellBlock theta_tourist;   // per-cell tourist preference, levels 1..H
  std::vector<double> phi0;  // background word log-frequencies, length |W|
  Matrix phi_topic;          // K x |W| word deviations
  std::vector<double> psi0;  // background item log-frequencies, length |V|
  Matrix psi_topic;          // K x |V| item deviations

  ModelConfig config;
  Dims dims;
  std::uint64_t dict_hash = 0;  // hash of the corpus dictionaries trained against
};

// Zero-initialized parameter set of the right shapes.
ModelParams init_params(const ModelConfig& cfg, const Dims& dims);

struct TopicDistribution {
  std::vector<double> probs;  // length K, non-negative, sums to 1
};

enum class PreferenceKind : std::uint8_t { kNative = 0, kTourist = 1 };

// Sum of the per-level cell parameters along the path, levels 1..upto_level,
// accumulated in ascending level order (so truncation is a bitwise prefix).
// Absent cells contribute nothing. upto_level == H reproduces the full
// smoothed preference; smaller values give the retrain-free zoomed view.
TopicVector smooth_preference(const ModelParams& params, PreferenceKind kind,
                              const CellPath& path, std::int32_t upto_level);

// Topic logits theta0 + theta_user + role-dependent crowd term, before the
// softmax; variant rules applied here. Exposed for scoring and gradients.
TopicVector topic_logits(const ModelParams& params, std::int32_t user, std::int32_t role,
                         const CellPath& path, std::int32_t upto_level);

// P(z | u, s, l): softmax over topic_logits.
TopicDistribution alpha(const ModelParams& params, std::int32_t user, std::int32_t role,
                        const CellPath& path, std::int32_t upto_level);

// P(w | z): softmax over phi0 + phi_topic[z].
std::vector<double> beta(const ModelParams& params, std::int32_t z);

// P(v | z): softmax over psi0 + psi_topic[z].
std::vector<double> gamma_items(const ModelParams& params, std::int32_t z);

// Dense K x |W| (resp. K x |V|) log-probability tables; the heavy loops in
// training and scoring read these instead of recomputing softmaxes.
Matrix log_beta_matrix(const ModelParams& params);
Matrix log_gamma_matrix(const ModelParams& params);

// Versioned binary container, bit-exact round trip including sparse absence.
void save_model(const ModelParams& params, std::ostream& out);
ModelParams load_model(std::istream& in);

bool params_equal(const ModelParams& a, const ModelParams& b);

}  // namespace geosage
