#include <catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <random>

#include "rlab/wavepacket.hpp"

using namespace rlab;
using Catch::Approx;

namespace {

const SurfaceGraph& surface(int res) {
  static std::map<int, SurfaceGraph> cache;
  auto it = cache.find(res);
  if (it == cache.end()) it = cache.emplace(res, build_surface(HeightSpec::paraboloid_spec(), res)).first;
  return it->second;
}

double smooth_bump(double t) { return t < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

// Smooth random f supported in the cap.
AmplitudeFunction smooth_cap_function(const SurfaceGraph& S, const Cap& cap, std::uint64_t seed) {
  auto g = AmplitudeFunction::random_smooth(S, seed);
  std::vector<cplx> v(S.nodes.size(), 0.0);
  for (int k : cap.nodes) v[k] = smooth_bump(norm(S.nodes[k].omega - cap.center) / cap.radius) * g[k];
  return {S, std::move(v)};
}

Vec3 random_point_in_ball(std::mt19937_64& rng, double R) {
  std::uniform_real_distribution<double> U(-R, R);
  Vec3 x;
  do x = {U(rng), U(rng), U(rng)};
  while (norm(x) > R);
  return x;
}

// Points of B(0, R) whose distance to T lies in [lo, hi] tube radii.
std::vector<Vec3> shell_points(const Tube& T, double period, double R, double lo, double hi, std::size_t want,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vec3> out;
  for (int tries = 0; tries < 200000 && out.size() < want; ++tries) {
    Vec3 x = random_point_in_ball(rng, R);
    double d = T.distance(x, period) / T.radius;
    if (d >= lo && d <= hi) out.push_back(x);
  }
  return out;
}

}  // namespace

TEST_CASE("frequency partition", "[wavepacket]") {
  WavePacketConfig cfg{256.0, 0.1, 2};
  const double rho = cfg.cap_radius();
  auto P = frequency_partition(rho, cfg, 512.0);

  SECTION("ball radius formulas") {
    CHECK(partition_ball_radius(0.1, 0.1) == Approx(12.589254).epsilon(1e-6));
    CHECK(P.radius == Approx(cfg.tube_radius()).epsilon(1e-12));
    CHECK(P.spacing <= P.radius);
    CHECK(P.m * P.spacing == Approx(512.0).epsilon(1e-14));
  }
  SECTION("bumps sum to 1 at random points") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-600.0, 600.0);
    for (int i = 0; i < 1000; ++i) {
      double s = P.sum_at({U(rng), U(rng)});
      REQUIRE(s >= 1.0 - 1e-10);
      REQUIRE(s <= 1.0 + 1e-10);
    }
  }
  SECTION("exhaustive overlap count over one lattice cell") {
    // Brute force over every center and its torus images.
    int worst = 0;
    for (int a = 0; a <= 64; ++a)
      for (int b = 0; b <= 64; ++b) {
        Vec2 k{a * P.spacing / 64.0, b * P.spacing / 64.0};
        int count = 0;
        for (const auto& c : P.centers())
          for (int u = -1; u <= 1; ++u)
            for (int v = -1; v <= 1; ++v)
              if (norm(k - Vec2{c[0] + u * 512.0, c[1] + v * 512.0}) < P.bump_radius) ++count;
        worst = std::max(worst, count);
        REQUIRE(P.overlap_at(k) == count);
      }
    CHECK(worst <= P.overlap_constant);
    CHECK(P.overlap_constant <= 9);
  }
  SECTION("torus distance and disjointness") {
    int last = static_cast<int>(P.size()) - 1;  // center (-s, -s)
    CHECK(P.center_distance(0, last) == Approx(std::sqrt(2.0) * P.spacing).epsilon(1e-12));
    CHECK_FALSE(P.disjoint(0, last));
    CHECK(P.disjoint(0, P.index(2, 0)) == (2.0 * P.spacing >= 2.0 * P.radius));
    CHECK(P.disjoint(0, P.index(3, 0)));
  }
  SECTION("errors") {
    CHECK_THROWS_AS(frequency_partition(rho, WavePacketConfig{256.0, 0.0, 2}, 512.0), InvalidArgument);
    CHECK_THROWS_AS(frequency_partition(0.1, cfg, 512.0), InvalidArgument);
    CHECK_THROWS_AS(partition_ball_radius(0.1, -0.1), InvalidArgument);
  }
}

TEST_CASE("wave packet configuration", "[wavepacket]") {
  CHECK_NOTHROW(WavePacketConfig{256.0, 0.25, 2}.validate());
  CHECK_THROWS_AS(WavePacketConfig({256.0, 0.3, 2}).validate(), InvalidArgument);
  CHECK_THROWS_AS(WavePacketConfig({256.0, 0.0, 2}).validate(), InvalidArgument);
  CHECK_THROWS_AS(WavePacketConfig({256.0, 0.1, 1}).validate(), InvalidArgument);
  CHECK_THROWS_AS(WavePacketConfig({100.0, 0.1, 2}).validate(), InvalidArgument);
  CHECK(WavePacketConfig{256.0, 0.1, 2}.tube_radius() == Approx(std::pow(256.0, 0.6)));
}

TEST_CASE("decomposition of a random smooth cap function", "[wavepacket]") {
  const auto& S = surface(512);
  WavePacketConfig cfg{256.0, 0.1, 2};
  auto cap = theta_cap(S, {0.3, 0.2}, cfg.R);
  auto f = smooth_cap_function(S, cap, 11);
  auto set = decompose(S, f, cap, cfg);
  REQUIRE(!set.packets.empty());

  SECTION("reconstruction residual recomputed over all nodes") {
    std::vector<cplx> sum(S.nodes.size(), 0.0);
    for (const auto& pk : set.packets)
      for (std::size_t t = 0; t < set.nodes.size(); ++t) sum[set.nodes[t]] += pk.values[t];
    double res = 0.0;
    for (std::size_t k = 0; k < S.nodes.size(); ++k) res += std::abs(f[k] - sum[k]) * S.nodes[k].weight;
    CHECK(res <= 1e-6 * f.norms().l1);
    CHECK(set.residual_l1 == Approx(res).margin(1e-15));
  }
  SECTION("frame bound with the recorded constant") {
    double wmax = 0.0, wmin = 1e300;
    for (int k : set.nodes) wmax = std::max(wmax, S.nodes[k].weight);
    for (std::size_t k = 0; k < f.size(); ++k)
      if (f[k] != 0.0) wmin = std::min(wmin, S.nodes[k].weight);
    CHECK(set.frame_constant == Approx(wmax / wmin).epsilon(1e-12));
    double total = 0.0;
    for (const auto& pk : set.packets) total += pk.l2sq;
    CHECK(total <= 1.05 * set.frame_constant * f.norms().l2 * f.norms().l2);
  }
  SECTION("packets are supported in 3 theta") {
    for (int k : set.nodes) REQUIRE(norm(S.nodes[k].omega - cap.center) <= 3.0 * cap.radius);
    auto g = set.amplitude(S, 0);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (g[k] != 0.0) REQUIRE(norm(S.nodes[k].omega - cap.center) <= 3.0 * cap.radius);
  }
  SECTION("tube geometry") {
    for (const auto& pk : set.packets) {
      CHECK(norm(pk.tube.direction) == Approx(1.0).epsilon(1e-14));
      CHECK(pk.tube.radius == Approx(cfg.tube_radius()));
      CHECK(pk.tube.half_length == cfg.R);
      CHECK(pk.tube.contains(pk.tube.point, set.period));
    }
  }
  SECTION("off-tube decay at 4 radii and monotone in distance") {
    std::vector<std::size_t> order(set.packets.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return set.packets[a].l2sq > set.packets[b].l2sq; });
    int tested = 0;
    for (std::size_t k : order) {
      const Tube& T = set.packets[k].tube;
      if (!T.meets_ball(cfg.R)) continue;
      auto near = shell_points(T, set.period, cfg.R, 2.0, 2.5, 60, 100 + k);
      auto far = shell_points(T, set.period, cfg.R, 4.0, 5.0, 60, 200 + k);
      if (near.size() < 10 || far.size() < 10) continue;
      double r_far = off_tube_decay(S, set, k, far);
      double r_near = off_tube_decay(S, set, k, near);
      CHECK(r_far <= 1.0 / (cfg.R * cfg.R));
      CHECK(r_far <= 2.0 * r_near);
      if (++tested == 12) break;
    }
    CHECK(tested == 12);
  }
  SECTION("off-tube decay rejects samples near the tube") {
    const Tube& T = set.packets[0].tube;
    std::vector<Vec3> axis{T.point, T.point + 0.5 * cfg.R * T.direction};
    CHECK_THROWS_AS(off_tube_decay(S, set, 0, axis), InvalidArgument);
  }
}

TEST_CASE("single modulated bump concentrates in one packet", "[wavepacket]") {
  const auto& S = surface(512);
  WavePacketConfig cfg{256.0, 0.1, 2};
  auto cap = theta_cap(S, {-0.2, 0.35}, cfg.R);
  auto P = frequency_partition(cap.radius, cfg, S.resolution);
  const int target = P.index(2, -1);
  const Vec2 k0 = P.center(target);
  auto f = AmplitudeFunction::from_function(
      S, [&](const Vec2& w) { return smooth_bump(norm(w - cap.center) / cap.radius) * expi2pi(dot(k0, w)); });
  auto set = decompose(S, f, cap, cfg);
  double total = 0.0, top = 0.0;
  int top_ball = -1;
  for (const auto& pk : set.packets) {
    total += pk.l2sq;
    if (pk.l2sq > top) {
      top = pk.l2sq;
      top_ball = pk.ball;
    }
  }
  CHECK(top_ball == target);
  CHECK(top >= 0.9 * total);
}

TEST_CASE("zero input and support errors", "[wavepacket]") {
  const auto& S = surface(256);
  WavePacketConfig cfg{144.0, 0.1, 2};
  auto cap = theta_cap(S, {0.1, -0.2}, cfg.R);
  auto set = decompose(S, AmplitudeFunction::zero(S), cap, cfg);
  CHECK(set.packets.empty());
  CHECK(set.residual_l1 == 0.0);

  std::vector<cplx> v(S.nodes.size(), 0.0);
  v[cap.nodes.front()] = 1.0;
  v[S.node_at(S.cell_of(0.6), S.cell_of(0.6))] = 1.0;
  CHECK_THROWS_WITH(decompose(S, AmplitudeFunction(S, v), cap, cfg),
                    Catch::Matchers::ContainsSubstring("not supported in the cap"));
  CHECK_THROWS_AS(decompose(S, AmplitudeFunction(S, v), cap, WavePacketConfig{100.0, 0.1, 2}), InvalidArgument);
}

TEST_CASE("packets of disjoint balls are nearly orthogonal", "[wavepacket]") {
  const auto& S = surface(256);
  WavePacketConfig cfg{144.0, 0.1, 2};
  auto cap = theta_cap(S, {0.1, -0.2}, cfg.R);
  auto f = AmplitudeFunction::gaussian(S, 3, cap.nodes);
  auto set = decompose(S, f, cap, cfg);
  const double bound = 1e-3 * f.norms().l1 * f.norms().l1;
  int pairs = 0;
  double worst = 0.0;
  for (std::size_t a = 0; a < set.packets.size(); ++a)
    for (std::size_t b = a + 1; b < set.packets.size(); ++b) {
      if (!set.partition.disjoint(set.packets[a].ball, set.packets[b].ball)) continue;
      worst = std::max(worst, packet_inner_product(S, set, a, b));
      ++pairs;
    }
  CHECK(pairs > 1000);
  CHECK(worst <= bound);
}

TEST_CASE("sum over caps reproduces Ef on B_R", "[wavepacket]") {
  const auto& S = surface(512);
  WavePacketConfig cfg{256.0, 0.1, 2};
  std::vector<Vec2> centers{{0.3, 0.2}, {-0.4, 0.1}, {0.0, -0.5}};
  std::vector<cplx> total(S.nodes.size(), 0.0);
  std::vector<WavePacketSet> sets;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    auto cap = theta_cap(S, centers[c], cfg.R, static_cast<int>(c));
    auto f = smooth_cap_function(S, cap, 20 + c);
    for (int k : cap.nodes) total[k] += f[k];
    sets.push_back(decompose(S, f, cap, cfg));
  }
  AmplitudeFunction F(S, total);
  ExtensionEvaluator E(S, F);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 12; ++i) {
    Vec3 x = random_point_in_ball(rng, cfg.R);
    cplx ef = E(x);
    auto nominal = tube_sum(S, sets, x, 1.0);
    // Exact reconstruction: the defect is the far-packet sum.
    CHECK(std::abs(ef - nominal.inside) <= nominal.outside_abs + 1e-9 * F.norms().l1);
    auto wide = tube_sum(S, sets, x, 3.0);
    CHECK(std::abs(ef - wide.inside) <= F.norms().l1 / (cfg.R * cfg.R));
  }
}
