#include "rfield/renderability.hpp"

#include "oracle.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace rfield;

namespace {

const Lattice& lattice64() {
  static Lattice lat = build_lattice(64);
  return lat;
}

}  // namespace

TEST_CASE("extrapolation classification") {
  Vec3 q = Vec3::UnitZ();

  SECTION("self-support is interpolation") {
    std::vector<Vec3> visited{q};
    REQUIRE(classify_extrapolation(visited, q, 0.0) == 1);
  }

  SECTION("a single offset direction is extrapolation") {
    Vec3 v(Eigen::AngleAxisd(deg2rad(30.0), Vec3::UnitY()) * q);
    std::vector<Vec3> visited{v};
    // origin sits sin(30 deg) away from the one-point box
    REQUIRE(classify_extrapolation(visited, q, 0.1) == 2);
    REQUIRE(classify_extrapolation(visited, q, std::sin(deg2rad(30.0)) + 1e-9) == 1);
  }

  SECTION("a symmetric cross around the query is interpolation") {
    std::vector<Vec3> visited;
    for (double sign : {-1.0, 1.0}) {
      visited.push_back(Eigen::AngleAxisd(sign * deg2rad(20.0), Vec3::UnitX()) * q);
      visited.push_back(Eigen::AngleAxisd(sign * deg2rad(20.0), Vec3::UnitY()) * q);
    }
    REQUIRE(classify_extrapolation(visited, q, 0.0) == 1);
  }

  SECTION("empty or back-facing history is extrapolation") {
    REQUIRE(classify_extrapolation({}, q, 0.5) == 2);
    std::vector<Vec3> behind{-q, Vec3(0.3, 0.3, -0.9).normalized()};
    REQUIRE(classify_extrapolation(behind, q, 0.5) == 2);
  }
}

TEST_CASE("bias at a visited bin center is exact-repeat support") {
  VoxelStats s(64);
  const Vec3& center = lattice64().centers[10];
  s.update(lattice64(), center, Vec3::Constant(0.5), 2.0);
  BiasResult br = bias(s, lattice64(), center);
  REQUIRE(br.cos_theta == 1.0);
  REQUIRE(br.kappa == 1);
  REQUIRE(br.b == 1.0);
}

TEST_CASE("bias for orthogonal and empty support") {
  VoxelStats s(64);
  SECTION("empty mask") {
    BiasResult br = bias(s, lattice64(), Vec3::UnitX());
    REQUIRE(br.cos_theta == 0.0);
    REQUIRE(br.kappa == 2);
    REQUIRE(br.b == 0.0);
  }
  SECTION("only the bin nearest +z visited, queried from +x") {
    s.update(lattice64(), Vec3::UnitZ(), Vec3::Constant(0.5), 2.0);
    int k = lattice64().nearest_bin(Vec3::UnitZ());
    BiasResult br = bias(s, lattice64(), Vec3::UnitX());
    double expected = std::clamp(lattice64().centers[k].dot(Vec3::UnitX()), 0.0, 1.0);
    REQUIRE(br.cos_theta == expected);
    REQUIRE(br.kappa == 2);
    REQUIRE(br.b < 0.1);
  }
}

TEST_CASE("epsilon exponent arithmetic") {
  REQUIRE(epsilon(0.2, 2, 1.0) == 1.0);  // b = 1 -> exponent 0
  REQUIRE(epsilon(0.0, 2, 1.0) == 1.0);  // 0^0 convention
  REQUIRE(epsilon(1.0, 2, 0.3) == 1.0);  // consistent appearance
  REQUIRE_THAT(epsilon(0.81, 2, 0.5), Catch::Matchers::WithinAbs(0.81, 1e-12));
}

TEST_CASE("resolution gain") {
  VoxelStats s(64);
  SECTION("unobserved primitive scores zero") {
    REQUIRE(resolution_gain(s, 1.0, 1.0, 1.0) == 0.0);
  }
  s.update(lattice64(), Vec3::UnitZ(), Vec3::Constant(0.5), 2.0);  // rho_max = 0.5
  SECTION("no closer query keeps full gain") {
    REQUIRE(resolution_gain(s, 2.0, 0.3, 0.4) == 1.0);
    REQUIRE(resolution_gain(s, 5.0, 0.3, 0.4) == 1.0);
  }
  SECTION("closer query decays by the depth ratio") {
    REQUIRE_THAT(resolution_gain(s, 1.0, 0.0, 0.0), Catch::Matchers::WithinAbs(0.5, 1e-12));
  }
  SECTION("fully supported primitive needs no extra resolution") {
    REQUIRE(resolution_gain(s, 1.0, 1.0, 1.0) == 1.0);
  }
}

TEST_CASE("renderability composes its factors exactly") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> col(0.0, 1.0);
  std::uniform_real_distribution<double> dep(0.5, 5.0);
  for (int trial = 0; trial < 2000; ++trial) {
    VoxelStats s(64);
    size_t n = rng() % 20;
    for (size_t i = 0; i < n; ++i) {
      s.update(lattice64(), random_unit(rng), Vec3(col(rng), col(rng), col(rng)),
               dep(rng));
    }
    Vec3 q = random_unit(rng);
    double depth = dep(rng);
    RenderabilityScore rs = renderability(s, lattice64(), q, depth);
    // bounds
    for (double v : {rs.b, rs.epsilon, rs.gamma, rs.r, s.delta()}) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
    // composition identity, bitwise
    BiasResult br = bias(s, lattice64(), q);
    double d = s.delta();
    double e = epsilon(d, br.kappa, br.b);
    double g = resolution_gain(s, depth, d, br.b);
    REQUIRE(rs.r == br.b * e * g);
    if (n == 0) REQUIRE(rs.r == 0.0);
  }
}

TEST_CASE("observe-then-query at a bin center with no closer depth gives R = 1") {
  VoxelStats s(64);
  const Vec3& dir = lattice64().centers[33];
  s.update(lattice64(), dir, Vec3::Constant(0.7), 1.5);
  REQUIRE(renderability(s, lattice64(), dir, 1.5).r == 1.0);
  REQUIRE(renderability(s, lattice64(), dir, 3.0).r == 1.0);
  // antipodal query has no support
  REQUIRE(renderability(s, lattice64(), -dir, 1.5).r == 0.0);
}

TEST_CASE("bias is monotone in observations") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    VoxelStats s(64);
    Vec3 q = random_unit(rng);
    double last_cos = -1.0;
    int last_kappa = 2;
    for (int i = 0; i < 50; ++i) {
      s.update(lattice64(), random_unit(rng), Vec3::Constant(0.5), 1.0);
      BiasResult br = bias(s, lattice64(), q);
      REQUIRE(br.cos_theta >= last_cos);
      // kappa may only transition 2 -> 1 as the projected box grows
      REQUIRE_FALSE((last_kappa == 1 && br.kappa == 2));
      last_cos = br.cos_theta;
      last_kappa = br.kappa;
    }
  }
}

TEST_CASE("binned bias tracks the exact full-history bias within the chord bound") {
  // Under a perturbation of at most bin_radius, a dot product moves by at
  // most the chord length 2*sin(bin_radius/2).
  std::mt19937_64 rng(23);
  double bound = 2.0 * std::sin(lattice64().bin_radius / 2.0);
  for (int trial = 0; trial < 10000; ++trial) {
    oracle::FullHistory h;
    VoxelStats s(64);
    size_t n = 1 + rng() % 64;
    for (size_t i = 0; i < n; ++i) {
      Vec3 d = random_unit(rng);
      h.add(d, Vec3::Constant(0.5), 1.0);
      s.update(lattice64(), d, Vec3::Constant(0.5), 1.0);
    }
    Vec3 q = random_unit(rng);
    double exact = oracle::exact_bias(h, q).cos_theta;
    double binned = bias(s, lattice64(), q).cos_theta;
    REQUIRE(std::abs(binned - exact) <= bound);
  }
}

TEST_CASE("batch scoring equals looped single queries") {
  std::mt19937_64 rng(24);
  StatsMap stats;
  std::uniform_real_distribution<double> col(0.0, 1.0);
  std::vector<GridIndex> ids;
  for (int i = 0; i < 100; ++i) {
    GridIndex id{static_cast<int32_t>(rng() % 40), static_cast<int32_t>(rng() % 40),
                 static_cast<int32_t>(rng() % 40)};
    auto [it, fresh] = stats.try_emplace(id, VoxelStats(64));
    for (int j = 0; j < 3; ++j) {
      it->second.update(lattice64(), random_unit(rng),
                        Vec3(col(rng), col(rng), col(rng)), 1.0 + col(rng));
    }
    if (fresh) ids.push_back(id);
  }
  Vec3 cam{-1.0, -1.0, -1.0};
  auto batch = batch_renderability(stats, lattice64(), ids, cam, 0.05);
  REQUIRE(batch.size() == ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    Vec3 to_c = index_center(ids[i], 0.05) - cam;
    double depth = to_c.norm();
    double single =
        renderability(stats.at(ids[i]), lattice64(), to_c / depth, depth).r;
    REQUIRE(batch[i] == single);
  }
  // missing ids score zero; empty input gives empty output
  std::vector<GridIndex> missing{{999, 999, 999}};
  REQUIRE(batch_renderability(stats, lattice64(), missing, cam, 0.05) ==
          std::vector<double>{0.0});
  REQUIRE(batch_renderability(stats, lattice64(), {}, cam, 0.05).empty());
}
