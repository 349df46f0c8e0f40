#include <doctest.h>

#include <cmath>
#include <sstream>

#include "geosage/logmath.hpp"
#include "geosage/model.hpp"
#include "geosage/rng.hpp"

using namespace geosage;

namespace {

ModelConfig small_config(std::int32_t k, std::int32_t height, Variant variant = Variant::kFull) {
  ModelConfig cfg;
  cfg.topics = k;
  cfg.variant = variant;
  cfg.pyramid = PyramidConfig(BoundingBox(GeoPoint(0.0, 0.0), GeoPoint(1.0, 1.0)), height);
  return cfg;
}

double rand_pm(Rng& rng, double mag) { return mag * (2.0 * uniform01(rng) - 1.0); }

// Random sparse parameters over a handful of users and all path cells.
ModelParams random_params(Rng& rng, std::int32_t k, std::int32_t height, Dims dims,
                          Variant variant = Variant::kFull) {
  ModelParams p = init_params(small_config(k, height, variant), dims);
  for (double& x : p.theta0) x = rand_pm(rng, 1.0);
  for (double& x : p.phi0) x = rand_pm(rng, 1.0);
  for (double& x : p.psi0) x = rand_pm(rng, 1.0);
  for (double& x : p.phi_topic.data)
    if (uniform01(rng) < 0.5) x = rand_pm(rng, 1.5);
  for (double& x : p.psi_topic.data)
    if (uniform01(rng) < 0.5) x = rand_pm(rng, 1.5);
  for (std::int32_t u = 0; u < dims.n_users; ++u) {
    if (uniform01(rng) < 0.7) {
      TopicVector v(static_cast<std::size_t>(k));
      for (double& x : v) x = rand_pm(rng, 1.0);
      p.theta_user.emplace(u, std::move(v));
    }
  }
  for (std::int32_t h = 1; h <= height; ++h) {
    const std::int32_t n = 1 << h;
    for (std::int32_t y = 0; y < n; ++y) {
      for (std::int32_t x = 0; x < n; ++x) {
        if (uniform01(rng) < 0.6) {
          TopicVector v(static_cast<std::size_t>(k));
          for (double& e : v) e = rand_pm(rng, 0.8);
          p.theta_native.emplace(CellId{h, x, y}, std::move(v));
        }
        if (uniform01(rng) < 0.6) {
          TopicVector v(static_cast<std::size_t>(k));
          for (double& e : v) e = rand_pm(rng, 0.8);
          p.theta_tourist.emplace(CellId{h, x, y}, std::move(v));
        }
      }
    }
  }
  return p;
}

GeoPoint random_point(Rng& rng, const BoundingBox& bb) {
  return GeoPoint(bb.min.lat + uniform01(rng) * (bb.max.lat - bb.min.lat),
                  bb.min.lon + uniform01(rng) * (bb.max.lon - bb.min.lon));
}

// Independent evaluation of the full-variant topic distribution: dense level
// loop, long double arithmetic, direct exponential ratio.
std::vector<double> alpha_oracle(const ModelParams& p, std::int32_t user, std::int32_t role,
                                 const CellPath& path, std::int32_t upto) {
  const auto k = p.theta0.size();
  std::vector<long double> eta(k, 0.0L);
  for (std::size_t z = 0; z < k; ++z) eta[z] = p.theta0[z];
  if (user != kColdUser) {
    auto it = p.theta_user.find(user);
    if (it != p.theta_user.end())
      for (std::size_t z = 0; z < k; ++z) eta[z] += it->second[z];
  }
  for (std::int32_t h = 1; h <= upto; ++h) {
    auto nat = p.theta_native.find(path.at_level(h));
    auto tou = p.theta_tourist.find(path.at_level(h));
    for (std::size_t z = 0; z < k; ++z) {
      long double nat_v = nat != p.theta_native.end() ? nat->second[z] : 0.0L;
      long double tou_v = tou != p.theta_tourist.end() ? tou->second[z] : 0.0L;
      eta[z] += (1.0L - role) * nat_v + static_cast<long double>(role) * tou_v;
    }
  }
  long double denom = 0.0L;
  for (std::size_t z = 0; z < k; ++z) denom += expl(eta[z]);
  std::vector<double> probs(k);
  for (std::size_t z = 0; z < k; ++z) probs[z] = static_cast<double>(expl(eta[z]) / denom);
  return probs;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("smooth_preference sums the path") {
  auto cfg = small_config(3, 2);
  ModelParams p = init_params(cfg, Dims{1, 1, 1});
  CellPath path = path_of(GeoPoint(0.1, 0.1), cfg.pyramid);
  p.theta_native[path.at_level(1)] = {0.1, 0.1, 0.1};
  p.theta_native[path.at_level(2)] = {0.2, 0.2, 0.2};
  TopicVector v = smooth_preference(p, PreferenceKind::kNative, path, 2);
  for (double x : v) CHECK(x == doctest::Approx(0.3));
}

TEST_CASE("smooth_preference of absent cells is the zero vector") {
  auto cfg = small_config(4, 3);
  ModelParams p = init_params(cfg, Dims{1, 1, 1});
  CellPath path = path_of(GeoPoint(0.9, 0.9), cfg.pyramid);
  TopicVector v = smooth_preference(p, PreferenceKind::kTourist, path, 3);
  for (double x : v) CHECK(x == 0.0);
}

TEST_CASE("smooth_preference equals a dense summation oracle on random params") {
  Rng rng(21);
  const std::int32_t k = 4, height = 3;
  ModelParams p = random_params(rng, k, height, Dims{3, 5, 6});
  for (int round = 0; round < 50; ++round) {
    CellPath path = path_of(random_point(rng, p.config.pyramid.bbox), p.config.pyramid);
    for (std::int32_t upto = 1; upto <= height; ++upto) {
      TopicVector got = smooth_preference(p, PreferenceKind::kNative, path, upto);
      for (std::size_t z = 0; z < static_cast<std::size_t>(k); ++z) {
        double want = 0.0;
        for (std::int32_t h = 1; h <= upto; ++h) {
          auto it = p.theta_native.find(path.at_level(h));
          if (it != p.theta_native.end()) want += it->second[z];
        }
        CHECK(got[z] == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("smooth_preference is a bitwise prefix sum") {
  Rng rng(22);
  ModelParams p = random_params(rng, 3, 4, Dims{2, 2, 2});
  CellPath path = path_of(random_point(rng, p.config.pyramid.bbox), p.config.pyramid);
  for (std::int32_t h = 1; h < 4; ++h) {
    TopicVector at_h = smooth_preference(p, PreferenceKind::kTourist, path, h);
    TopicVector at_h1 = smooth_preference(p, PreferenceKind::kTourist, path, h + 1);
    auto it = p.theta_tourist.find(path.at_level(h + 1));
    for (std::size_t z = 0; z < at_h.size(); ++z) {
      double step = it != p.theta_tourist.end() ? it->second[z] : 0.0;
      CHECK(at_h1[z] == at_h[z] + step);  // exact, not approximate
    }
  }
}

TEST_CASE("alpha is uniform for all-zero parameters") {
  auto cfg = small_config(4, 2);
  ModelParams p = init_params(cfg, Dims{1, 1, 1});
  CellPath path = path_of(GeoPoint(0.5, 0.5), cfg.pyramid);
  TopicDistribution d = alpha(p, 0, 0, path, 2);
  for (double x : d.probs) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("alpha matches the analytic two-topic value") {
  auto cfg = small_config(2, 1);
  ModelParams p = init_params(cfg, Dims{1, 1, 1});
  p.theta0 = {1.0, 0.0};
  CellPath path = path_of(GeoPoint(0.5, 0.5), cfg.pyramid);
  TopicDistribution d = alpha(p, kColdUser, 1, path, 1);
  CHECK(std::abs(d.probs[0] - 0.7310585786300049) < 1e-5);
  CHECK(std::abs(d.probs[1] - 0.2689414213699951) < 1e-5);
}

TEST_CASE("alpha matches the independent direct-formula oracle") {
  Rng rng(31);
  ModelParams p = random_params(rng, 3, 2, Dims{4, 5, 6});
  for (int round = 0; round < 100; ++round) {
    CellPath path = path_of(random_point(rng, p.config.pyramid.bbox), p.config.pyramid);
    std::int32_t user = uniform01(rng) < 0.2 ? kColdUser
                                             : static_cast<std::int32_t>(uniform_below(rng, 4));
    std::int32_t role = static_cast<std::int32_t>(uniform_below(rng, 2));
    TopicDistribution got = alpha(p, user, role, path, 2);
    std::vector<double> want = alpha_oracle(p, user, role, path, 2);
    for (std::size_t z = 0; z < want.size(); ++z)
      CHECK(got.probs[z] == doctest::Approx(want[z]).epsilon(1e-10));
  }
}

TEST_CASE("alpha normalization on random draws") {
  Rng rng(32);
  ModelParams p = random_params(rng, 5, 3, Dims{4, 5, 6});
  for (int round = 0; round < 200; ++round) {
    CellPath path = path_of(random_point(rng, p.config.pyramid.bbox), p.config.pyramid);
    TopicDistribution d =
        alpha(p, static_cast<std::int32_t>(uniform_below(rng, 4)),
              static_cast<std::int32_t>(uniform_below(rng, 2)), path, 3);
    double sum = 0.0;
    for (double x : d.probs) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("variant s1 ignores role and path") {
  Rng rng(33);
  ModelParams p = random_params(rng, 4, 3, Dims{3, 4, 5}, Variant::kS1);
  CellPath p1 = path_of(GeoPoint(0.1, 0.1), p.config.pyramid);
  CellPath p2 = path_of(GeoPoint(0.9, 0.8), p.config.pyramid);
  TopicDistribution a = alpha(p, 1, 0, p1, 3);
  TopicDistribution b = alpha(p, 1, 1, p2, 3);
  CHECK(a.probs == b.probs);
}

TEST_CASE("variant s2 ignores role given the path") {
  Rng rng(34);
  ModelParams p = random_params(rng, 4, 3, Dims{3, 4, 5}, Variant::kS2);
  CellPath path = path_of(GeoPoint(0.3, 0.7), p.config.pyramid);
  CHECK(alpha(p, 2, 0, path, 3).probs == alpha(p, 2, 1, path, 3).probs);
  // but not the path itself: the crowd term still matters
  CellPath other = path_of(GeoPoint(0.9, 0.1), p.config.pyramid);
  CHECK(alpha(p, 2, 0, path, 3).probs != alpha(p, 2, 0, other, 3).probs);
}

TEST_CASE("variant s3 uses only the active-level cell") {
  Rng rng(35);
  ModelParams p = random_params(rng, 4, 3, Dims{3, 4, 5}, Variant::kS3);
  CellPath path = path_of(GeoPoint(0.3, 0.7), p.config.pyramid);
  // reference: background + user + the leaf cell parameters only
  ModelParams leaf_only = p;
  leaf_only.theta_native.clear();
  leaf_only.theta_tourist.clear();
  auto nat = p.theta_native.find(path.at_level(3));
  if (nat != p.theta_native.end()) leaf_only.theta_native.emplace(*nat);
  auto tou = p.theta_tourist.find(path.at_level(3));
  if (tou != p.theta_tourist.end()) leaf_only.theta_tourist.emplace(*tou);
  leaf_only.config.variant = Variant::kFull;  // full sum over a single planted level
  for (std::int32_t role = 0; role <= 1; ++role) {
    CHECK(alpha(p, 1, role, path, 3).probs == alpha(leaf_only, 1, role, path, 3).probs);
  }
}

TEST_CASE("beta with zero deviations is the background for every topic") {
  Rng rng(36);
  ModelParams p = init_params(small_config(3, 1), Dims{1, 1, 4});
  for (double& x : p.phi0) x = rand_pm(rng, 1.0);
  std::vector<double> b0 = beta(p, 0);
  CHECK(beta(p, 1) == b0);
  CHECK(beta(p, 2) == b0);
  std::vector<double> want = p.phi0;
  softmax_inplace(want);
  for (std::size_t w = 0; w < want.size(); ++w)
    CHECK(b0[w] == doctest::Approx(want[w]).epsilon(1e-12));
}

TEST_CASE("beta analytic two-word case") {
  ModelParams p = init_params(small_config(1, 1), Dims{1, 1, 2});
  p.phi_topic.at(0, 0) = std::log(3.0);
  std::vector<double> b = beta(p, 0);
  CHECK(b[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(b[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("gamma analytic two-item case") {
  ModelParams p = init_params(small_config(1, 1), Dims{1, 2, 1});
  p.psi_topic.at(0, 0) = std::log(9.0);
  std::vector<double> g = gamma_items(p, 0);
  CHECK(g[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("beta and gamma normalize on random parameters") {
  Rng rng(37);
  ModelParams p = random_params(rng, 4, 2, Dims{3, 7, 9});
  for (std::int32_t z = 0; z < 4; ++z) {
    double bs = 0.0, gs = 0.0;
    for (double x : beta(p, z)) bs += x;
    for (double x : gamma_items(p, z)) gs += x;
    CHECK(std::abs(bs - 1.0) < 1e-9);
    CHECK(std::abs(gs - 1.0) < 1e-9);
    CHECK(std::exp(log_beta_matrix(p).at(static_cast<std::size_t>(z), 0)) ==
          doctest::Approx(beta(p, z)[0]).epsilon(1e-12));
  }
}

TEST_CASE("shift invariance of every distribution") {
  Rng rng(38);
  ModelParams p = random_params(rng, 4, 2, Dims{3, 5, 6});
  CellPath path = path_of(GeoPoint(0.4, 0.6), p.config.pyramid);
  TopicDistribution base = alpha(p, 1, 1, path, 2);
  std::vector<double> beta_base = beta(p, 2);
  std::vector<double> gamma_base = gamma_items(p, 2);

  ModelParams shifted = p;
  for (double& x : shifted.theta0) x += 3.7;
  TopicDistribution a2 = alpha(shifted, 1, 1, path, 2);
  for (std::size_t z = 0; z < a2.probs.size(); ++z)
    CHECK(std::abs(a2.probs[z] - base.probs[z]) < 1e-9);

  shifted = p;
  auto it = shifted.theta_user.find(1);
  REQUIRE(it != shifted.theta_user.end());
  for (double& x : it->second) x += -2.5;
  a2 = alpha(shifted, 1, 1, path, 2);
  for (std::size_t z = 0; z < a2.probs.size(); ++z)
    CHECK(std::abs(a2.probs[z] - base.probs[z]) < 1e-9);

  shifted = p;
  for (double& x : shifted.phi0) x += 1.9;
  std::vector<double> b2 = beta(shifted, 2);
  for (std::size_t w = 0; w < b2.size(); ++w) CHECK(std::abs(b2[w] - beta_base[w]) < 1e-9);

  shifted = p;
  for (double& x : shifted.psi0) x += -4.2;
  std::vector<double> g2 = gamma_items(shifted, 2);
  for (std::size_t v = 0; v < g2.size(); ++v) CHECK(std::abs(g2[v] - gamma_base[v]) < 1e-9);
}

TEST_CASE("zoom consistency: truncated pyramid gives the same alpha bitwise") {
  Rng rng(39);
  const std::int32_t height = 4;
  ModelParams p = random_params(rng, 3, height, Dims{2, 2, 2});
  for (std::int32_t h = 1; h < height; ++h) {
    // a model retrained on a pyramid of height h would hold exactly the
    // cells at levels <= h; parameters are unchanged
    ModelParams truncated = p;
    truncated.config.pyramid = PyramidConfig(p.config.pyramid.bbox, h);
    std::erase_if(truncated.theta_native, [&](const auto& kv) { return kv.first.level > h; });
    std::erase_if(truncated.theta_tourist, [&](const auto& kv) { return kv.first.level > h; });
    for (int round = 0; round < 30; ++round) {
      GeoPoint pt = random_point(rng, p.config.pyramid.bbox);
      CellPath full_path = path_of(pt, p.config.pyramid);
      CellPath trunc_path = path_of(pt, truncated.config.pyramid);
      CHECK(alpha(p, 0, 1, full_path, h).probs == alpha(truncated, 0, 1, trunc_path, h).probs);
    }
  }
}

TEST_CASE("model save/load round-trips bit-exactly") {
  Rng rng(40);
  ModelParams p = random_params(rng, 3, 2, Dims{4, 5, 6});
  p.dict_hash = 0xdeadbeefcafef00dULL;
  // plant exact zeros inside a dense block to exercise sparse encoding
  p.phi_topic.at(1, 2) = 0.0;
  p.phi_topic.at(2, 0) = 0.0;

  std::ostringstream buf1;
  save_model(p, buf1);
  std::istringstream rd(buf1.str());
  ModelParams q = load_model(rd);
  CHECK(params_equal(p, q));

  std::ostringstream buf2;
  save_model(q, buf2);
  CHECK(buf1.str() == buf2.str());
}

TEST_CASE("absent sparse blocks stay absent through save/load") {
  ModelParams p = init_params(small_config(2, 3), Dims{5, 4, 3});
  p.theta_user[2] = {0.5, -0.5};
  p.theta_native[CellId{2, 1, 1}] = {0.25, 0.0};
  std::ostringstream buf;
  save_model(p, buf);
  std::istringstream rd(buf.str());
  ModelParams q = load_model(rd);
  CHECK(q.theta_user.size() == 1);
  CHECK(q.theta_user.count(2) == 1);
  CHECK(q.theta_native.size() == 1);
  CHECK(q.theta_tourist.empty());
}

TEST_CASE("model loader rejects wrong magic and truncation") {
  std::istringstream bad("GEOSAGE-HAT-MODEL-9....");
  CHECK_THROWS_AS(load_model(bad), VersionMismatch);

  ModelParams p = init_params(small_config(2, 2), Dims{1, 2, 3});
  std::ostringstream buf;
  save_model(p, buf);
  std::string bytes = buf.str();
  std::istringstream truncated(bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_model(truncated), CorruptModel);
}

}  // TEST_SUITE
