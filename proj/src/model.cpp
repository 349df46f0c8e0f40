#include "geosage/model.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "geosage/io.hpp"
#include "geosage/logmath.hpp"

namespace geosage {

namespace {

constexpr char kModelMagic[] = "GEOSAGE-MODEL-1\n";
constexpr char kEndMagic[] = "GEOSAGE-END\n";

void add_cell_params(const CellBlock& block, const CellId& cell, TopicVector& acc) {
  auto it = block.find(cell);
  if (it == block.end()) return;
  for (std::size_t z = 0; z < acc.size(); ++z) acc[z] += it->second[z];
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kS1: return "s1";
    case Variant::kS2: return "s2";
    case Variant::kS3: return "s3";
  }
  return "full";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "s1") return Variant::kS1;
  if (s == "s2") return Variant::kS2;
  if (s == "s3") return Variant::kS3;
  throw UsageError("unknown variant '" + s + "' (expected full|s1|s2|s3)");
}

ModelParams init_params(const ModelConfig& cfg, const Dims& dims) {
  ModelParams p;
  p.config = cfg;
  p.dims = dims;
  p.theta0.assign(static_cast<std::size_t>(cfg.topics), 0.0);
  p.phi0.assign(static_cast<std::size_t>(dims.n_words), 0.0);
  p.psi0.assign(static_cast<std::size_t>(dims.n_items), 0.0);
  p.phi_topic = Matrix(static_cast<std::size_t>(cfg.topics), static_cast<std::size_t>(dims.n_words));
  p.psi_topic = Matrix(static_cast<std::size_t>(cfg.topics), static_cast<std::size_t>(dims.n_items));
  return p;
}

TopicVector smooth_preference(const ModelParams& params, PreferenceKind kind,
                              const CellPath& path, std::int32_t upto_level) {
  const CellBlock& block =
      kind == PreferenceKind::kNative ? params.theta_native : params.theta_tourist;
  TopicVector acc(params.theta0.size(), 0.0);
  for (std::int32_t h = 1; h <= upto_level; ++h) add_cell_params(block, path.at_level(h), acc);
  return acc;
}

TopicVector topic_logits(const ModelParams& params, std::int32_t user, std::int32_t role,
                         const CellPath& path, std::int32_t upto_level) {
  TopicVector eta = params.theta0;
  if (user != kColdUser) {
    auto it = params.theta_user.find(user);
    if (it != params.theta_user.end())
      for (std::size_t z = 0; z < eta.size(); ++z) eta[z] += it->second[z];
  }
  switch (params.config.variant) {
    case Variant::kS1:
      break;
    case Variant::kS2: {
      // role-agnostic crowd term, stored in the native block, still smoothed
      TopicVector crowd = smooth_preference(params, PreferenceKind::kNative, path, upto_level);
      for (std::size_t z = 0; z < eta.size(); ++z) eta[z] += crowd[z];
      break;
    }
    case Variant::kS3: {
      // only the cell at the active level, no ancestor smoothing
      const CellBlock& block = role == 0 ? params.theta_native : params.theta_tourist;
      add_cell_params(block, path.at_level(upto_level), eta);
      break;
    }
    case Variant::kFull: {
      TopicVector crowd = smooth_preference(
          params, role == 0 ? PreferenceKind::kNative : PreferenceKind::kTourist, path,
          upto_level);
      for (std::size_t z = 0; z < eta.size(); ++z) eta[z] += crowd[z];
      break;
    }
  }
  return eta;
}

TopicDistribution alpha(const ModelParams& params, std::int32_t user, std::int32_t role,
                        const CellPath& path, std::int32_t upto_level) {
  TopicDistribution d;
  d.probs = topic_logits(params, user, role, path, upto_level);
  softmax_inplace(d.probs);
  return d;
}

std::vector<double> beta(const ModelParams& params, std::int32_t z) {
  std::vector<double> v(params.phi0);
  const double* row = params.phi_topic.row(static_cast<std::size_t>(z));
  for (std::size_t w = 0; w < v.size(); ++w) v[w] += row[w];
  softmax_inplace(v);
  return v;
}

std::vector<double> gamma_items(const ModelParams& params, std::int32_t z) {
  std::vector<double> v(params.psi0);
  const double* row = params.psi_topic.row(static_cast<std::size_t>(z));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += row[i];
  softmax_inplace(v);
  return v;
}

namespace {

Matrix log_prob_table(const std::vector<double>& background, const Matrix& deviations) {
  Matrix out(deviations.rows, deviations.cols);
  std::vector<double> logits(deviations.cols);
  for (std::size_t z = 0; z < deviations.rows; ++z) {
    const double* dev = deviations.row(z);
    for (std::size_t j = 0; j < deviations.cols; ++j) logits[j] = background[j] + dev[j];
    const double lz = log_sum_exp(logits);
    double* row = out.row(z);
    for (std::size_t j = 0; j < deviations.cols; ++j) row[j] = logits[j] - lz;
  }
  return out;
}

}  // namespace

Matrix log_beta_matrix(const ModelParams& params) {
  return log_prob_table(params.phi0, params.phi_topic);
}

Matrix log_gamma_matrix(const ModelParams& params) {
  return log_prob_table(params.psi0, params.psi_topic);
}

namespace {

void write_vec(BinaryWriter& w, const std::vector<double>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (double x : v) w.f64(x);
}

std::vector<double> read_vec(BinaryReader& r, std::size_t expect) {
  std::uint32_t n = r.u32();
  if (n != expect) r.fail("vector length mismatch");
  std::vector<double> v(n);
  for (double& x : v) x = r.f64();
  return v;
}

void write_user_block(BinaryWriter& w, const UserBlock& block) {
  w.u32(static_cast<std::uint32_t>(block.size()));
  for (const auto& [user, vec] : block) {
    w.i32(user);
    write_vec(w, vec);
  }
}

UserBlock read_user_block(BinaryReader& r, std::size_t k) {
  UserBlock block;
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::int32_t user = r.i32();
    block.emplace(user, read_vec(r, k));
  }
  return block;
}

void write_cell_block(BinaryWriter& w, const CellBlock& block) {
  w.u32(static_cast<std::uint32_t>(block.size()));
  for (const auto& [cell, vec] : block) {
    w.i32(cell.level);
    w.i32(cell.x);
    w.i32(cell.y);
    write_vec(w, vec);
  }
}

CellBlock read_cell_block(BinaryReader& r, std::size_t k) {
  CellBlock block;
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    CellId cell{r.i32(), r.i32(), r.i32()};
    block.emplace(cell, read_vec(r, k));
  }
  return block;
}

// Matrices are stored as per-row (index, value) pairs of the nonzero entries;
// L1 training leaves most deviations at exact zero.
void write_sparse_matrix(BinaryWriter& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(m.cols));
  for (std::size_t z = 0; z < m.rows; ++z) {
    const double* row = m.row(z);
    std::uint32_t nnz = 0;
    for (std::size_t j = 0; j < m.cols; ++j)
      if (row[j] != 0.0) ++nnz;
    w.u32(nnz);
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (row[j] != 0.0) {
        w.u32(static_cast<std::uint32_t>(j));
        w.f64(row[j]);
      }
    }
  }
}

Matrix read_sparse_matrix(BinaryReader& r, std::size_t rows, std::size_t cols) {
  if (r.u32() != rows || r.u32() != cols) r.fail("matrix shape mismatch");
  Matrix m(rows, cols);
  for (std::size_t z = 0; z < rows; ++z) {
    std::uint32_t nnz = r.u32();
    if (nnz > cols) r.fail("row nnz out of range");
    double* row = m.row(z);
    for (std::uint32_t i = 0; i < nnz; ++i) {
      std::uint32_t j = r.u32();
      if (j >= cols) r.fail("column index out of range");
      row[j] = r.f64();
    }
  }
  return m;
}

}  // namespace

void save_model(const ModelParams& params, std::ostream& out) {
  BinaryWriter w(out);
  w.magic(kModelMagic);
  w.u32(static_cast<std::uint32_t>(params.config.topics));
  w.u8(static_cast<std::uint8_t>(params.config.variant));
  w.f64(params.config.l1_weight);
  w.f64(params.config.d_km);
  w.u64(params.config.seed);
  const PyramidConfig& pyr = params.config.pyramid;
  w.f64(pyr.bbox.min.lat);
  w.f64(pyr.bbox.min.lon);
  w.f64(pyr.bbox.max.lat);
  w.f64(pyr.bbox.max.lon);
  w.u32(static_cast<std::uint32_t>(pyr.height));
  w.i32(params.dims.n_users);
  w.i32(params.dims.n_items);
  w.i32(params.dims.n_words);
  w.u64(params.dict_hash);

  write_vec(w, params.theta0);
  write_user_block(w, params.theta_user);
  write_cell_block(w, params.theta_native);
  write_cell_block(w, params.theta_tourist);
  write_vec(w, params.phi0);
  write_sparse_matrix(w, params.phi_topic);
  write_vec(w, params.psi0);
  write_sparse_matrix(w, params.psi_topic);
  w.magic(kEndMagic);
}

ModelParams load_model(std::istream& in) {
  BinaryReader r(in, "model");
  r.expect_magic(kModelMagic, /*version_gate=*/true);
  ModelConfig cfg;
  cfg.topics = static_cast<std::int32_t>(r.u32());
  std::uint8_t variant = r.u8();
  if (variant > 3) r.fail("unknown variant tag");
  cfg.variant = static_cast<Variant>(variant);
  cfg.l1_weight = r.f64();
  cfg.d_km = r.f64();
  cfg.seed = r.u64();
  double min_lat = r.f64(), min_lon = r.f64(), max_lat = r.f64(), max_lon = r.f64();
  std::int32_t height = static_cast<std::int32_t>(r.u32());
  cfg.pyramid = PyramidConfig(BoundingBox(GeoPoint(min_lat, min_lon), GeoPoint(max_lat, max_lon)),
                              height);
  Dims dims;
  dims.n_users = r.i32();
  dims.n_items = r.i32();
  dims.n_words = r.i32();
  if (cfg.topics < 1 || dims.n_users < 0 || dims.n_items < 0 || dims.n_words < 0)
    r.fail("bad dimensions");

  ModelParams p = init_params(cfg, dims);
  p.dict_hash = r.u64();
  const auto k = static_cast<std::size_t>(cfg.topics);
  p.theta0 = read_vec(r, k);
  p.theta_user = read_user_block(r, k);
  p.theta_native = read_cell_block(r, k);
  p.theta_tourist = read_cell_block(r, k);
  p.phi0 = read_vec(r, static_cast<std::size_t>(dims.n_words));
  p.phi_topic = read_sparse_matrix(r, k, static_cast<std::size_t>(dims.n_words));
  p.psi0 = read_vec(r, static_cast<std::size_t>(dims.n_items));
  p.psi_topic = read_sparse_matrix(r, k, static_cast<std::size_t>(dims.n_items));
  r.expect_magic(kEndMagic);

  for (const auto& [user, vec] : p.theta_user)
    if (user < 0 || user >= dims.n_users) r.fail("user id out of range");
  auto check_cells = [&](const CellBlock& block) {
    for (const auto& [cell, vec] : block) {
      if (cell.level < 1 || cell.level > height || cell.x < 0 ||
          cell.x >= (std::int32_t{1} << cell.level) || cell.y < 0 ||
          cell.y >= (std::int32_t{1} << cell.level)) {
        r.fail("cell id out of range");
      }
    }
  };
  check_cells(p.theta_native);
  check_cells(p.theta_tourist);
  return p;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
  return a.theta0 == b.theta0 && a.theta_user == b.theta_user &&
         a.theta_native == b.theta_native && a.theta_tourist == b.theta_tourist &&
         a.phi0 == b.phi0 && a.phi_topic == b.phi_topic && a.psi0 == b.psi0 &&
         a.psi_topic == b.psi_topic && a.dims == b.dims && a.dict_hash == b.dict_hash &&
         a.config.topics == b.config.topics && a.config.variant == b.config.variant &&
         a.config.l1_weight == b.config.l1_weight && a.config.d_km == b.config.d_km &&
         a.config.seed == b.config.seed;
}

}  // namespace geosage
