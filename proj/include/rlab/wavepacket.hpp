#pragma once

#include <fftw3.h>

#include <mutex>
#include <optional>
#include <vector>

#include "rlab/core.hpp"
#include "rlab/extension.hpp"
#include "rlab/geometry.hpp"

namespace rlab {

struct WavePacketConfig {
  double R = 256.0;
  double delta = 0.1;
  int decay_order = 2;  // desk-scale N'

  void validate() const {
    require(delta > 0.0 && delta <= 0.25, "wave packets need 0 < delta <= 1/4");
    require(decay_order >= 2, "wave packets need decay order >= 2");
    require(R >= 144.0, "wave packets need R >= 144 so that the cap radius R^{-1/2} is at most 1/12");
  }
  double cap_radius() const { return 1.0 / std::sqrt(R); }
  double tube_radius() const { return std::pow(R, 0.5 + delta); }
};

// rho^{-1-delta}: frequency ball radius as a function of the cap radius.
inline double partition_ball_radius(double rho, double delta) {
  require(rho > 0.0 && delta > 0.0, "ball radius needs rho > 0 and delta > 0");
  return std::pow(rho, -1.0 - delta);
}

namespace detail {

// C^infinity step: 0 for t <= 0, 1 for t >= 1.
inline double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

}  // namespace detail

// Square-lattice partition of unity on the dual plane, periodic with the
// period of the discrete frequency domain. Ball D has radius `radius`; bumps
// are supported in (3/4) D and normalized pointwise to sum to 1.
struct FrequencyPartition {
  double radius = 0.0;
  double spacing = 0.0;  // period / m <= radius
  double bump_radius = 0.0;
  double period = 0.0;
  int m = 0;  // centers per period and axis
  int overlap_constant = 4;

  std::size_t size() const { return static_cast<std::size_t>(m) * m; }
  int index(int a, int b) const {
    auto wrap = [&](int t) { return ((t % m) + m) % m; };
    return wrap(a) * m + wrap(b);
  }
  // Representative center in [-period/2, period/2)^2.
  Vec2 center(int d) const {
    auto rep = [&](int t) {
      double c = t * spacing;
      return c >= 0.5 * period - 1e-9 * spacing ? c - period : c;
    };
    return {rep(d / m), rep(d % m)};
  }
  std::vector<Vec2> centers() const {
    std::vector<Vec2> c;
    for (std::size_t d = 0; d < size(); ++d) c.push_back(center(static_cast<int>(d)));
    return c;
  }
  // Distance between ball centers on the period torus.
  double center_distance(int d1, int d2) const {
    auto w = [&](double t) { return t - period * std::round(t / period); };
    Vec2 a = center(d1), b = center(d2);
    return norm(Vec2{w(a[0] - b[0]), w(a[1] - b[1])});
  }
  bool disjoint(int d1, int d2) const { return center_distance(d1, d2) >= 2.0 * radius; }

  // Nonzero (ball index, phi_D(k)) pairs at k.
  std::vector<std::pair<int, double>> weights_at(const Vec2& k) const {
    std::vector<std::pair<int, double>> out;
    int a0 = static_cast<int>(std::floor((k[0] - bump_radius) / spacing)), a1 = static_cast<int>(std::ceil((k[0] + bump_radius) / spacing));
    int b0 = static_cast<int>(std::floor((k[1] - bump_radius) / spacing)), b1 = static_cast<int>(std::ceil((k[1] + bump_radius) / spacing));
    double total = 0.0;
    for (int a = a0; a <= a1; ++a)
      for (int b = b0; b <= b1; ++b) {
        double t = norm(k - Vec2{a * spacing, b * spacing}) / bump_radius;
        double v = detail::smooth_step(2.0 * (1.0 - t));  // 1 on t <= 1/2, 0 on t >= 1
        if (v > 0.0) {
          out.push_back({index(a, b), v});
          total += v;
        }
      }
    for (auto& [i, v] : out) v /= total;
    return out;
  }
  double sum_at(const Vec2& k) const {
    double s = 0.0;
    for (const auto& [i, v] : weights_at(k)) s += v;
    return s;
  }
  int overlap_at(const Vec2& k) const { return static_cast<int>(weights_at(k).size()); }
};

// Ball radius rho^{-1-2 delta} = R^{1/2 + delta}, so balls and tubes share
// one radius; the lattice spacing is shrunk to divide the period.
inline FrequencyPartition frequency_partition(double rho, const WavePacketConfig& cfg, double period) {
  require(cfg.delta > 0.0, "frequency partition needs delta > 0");
  require(rho > 0.0 && rho <= 1.0 / 12.0 + 1e-15, "frequency partition needs a cap radius at most 1/12");
  require(period > 0.0, "frequency partition needs a positive period");
  FrequencyPartition P;
  P.radius = std::pow(rho, -1.0 - 2.0 * cfg.delta);
  P.period = period;
  P.m = std::max(1, static_cast<int>(std::ceil(period / P.radius - 1e-12)));
  P.spacing = period / P.m;
  P.bump_radius = 0.75 * P.spacing;
  return P;
}

struct Tube {
  int id = 0;
  int cap = 0;
  Vec3 direction;  // unit cap normal
  Vec3 point;      // axis point in the plane x3 = 0
  double radius = 0.0;
  double half_length = 0.0;
  Vec2 ball_center;

  // Distance from x to the axis segment, minimized over the x' translates by
  // `period` (the discrete extension operator is |.|-periodic in x').
  double distance(const Vec3& x, double period = 0.0) const {
    double best = 1e300;
    int m = period > 0.0 ? 1 : 0;
    for (int a = -m; a <= m; ++a)
      for (int b = -m; b <= m; ++b) {
        Vec3 p{point[0] + a * period, point[1] + b * period, point[2]};
        Vec3 d = x - p;
        double t = std::clamp(dot(d, direction), -half_length, half_length);
        best = std::min(best, norm(d - t * direction));
      }
    return best;
  }
  bool contains(const Vec3& x, double period = 0.0) const { return distance(x, period) <= radius; }
  bool meets_ball(double R) const { return distance({0, 0, 0}) <= R + radius; }
};

struct WavePacket {
  Tube tube;
  int ball = 0;
  std::vector<cplx> values;  // on WavePacketSet::nodes
  double l2sq = 0.0;
};

struct WavePacketSet {
  int cap = 0;
  Vec2 cap_center;
  double cap_radius = 0.0;
  WavePacketConfig config;
  FrequencyPartition partition;
  std::vector<int> nodes;  // common packet support, inside 3 theta
  std::vector<WavePacket> packets;
  double f_l1 = 0.0, f_l2 = 0.0;
  double residual_l1 = 0.0;      // ||f - sum f_T||_{L^1(S)}
  double frame_constant = 0.0;   // C with sum ||f_T||^2 <= C ||f||^2
  double packet_l2sq_total = 0.0;
  double period = 0.0;           // x' period of |E.| on this surface grid

  AmplitudeFunction amplitude(const SurfaceGraph& S, std::size_t k) const {
    std::vector<cplx> v(S.nodes.size(), 0.0);
    for (std::size_t t = 0; t < nodes.size(); ++t) v[nodes[t]] = packets[k].values[t];
    return {S, std::move(v)};
  }
  ExtensionEvaluator evaluator(const SurfaceGraph& S, std::size_t k) const {
    return ExtensionEvaluator(S, nodes, packets[k].values);
  }
};

// psi: 1 on |w - w0| <= 1.25 rho, 0 beyond 2.9 rho.
inline double cap_cutoff(double d, double rho) { return detail::smooth_step((2.9 * rho - d) / (1.65 * rho)); }

// theta cap of radius R^{-1/2} at a given center.
inline Cap theta_cap(const SurfaceGraph& S, const Vec2& center, double R, int id = 0) {
  Cap c;
  c.id = id;
  c.center = center;
  c.radius = 1.0 / std::sqrt(R);
  require(c.radius <= 1.0 / 12.0 + 1e-15, "theta cap radius must be at most 1/12");
  c.normal = cap_normal(S.h, center);
  c.nodes = nodes_in_disc(S, center, c.radius);
  return c;
}

namespace detail {

inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  fftw_complex* p = nullptr;
  explicit FftwBuffer(std::size_t n) {
    p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (!p) throw ResourceError("fftw_malloc failed");
  }
  ~FftwBuffer() { fftw_free(p); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
};

struct FftwPlan {
  fftw_plan p = nullptr;
  ~FftwPlan() {
    if (p) {
      std::lock_guard<std::mutex> g(fftw_plan_mutex());
      fftw_destroy_plan(p);
    }
  }
};

}  // namespace detail

// f_D = psi (phi_D * f) computed on a periodic box of side about 8 rho around the cap.
inline WavePacketSet decompose(const SurfaceGraph& S, const AmplitudeFunction& f, const Cap& cap,
                               const WavePacketConfig& cfg) {
  cfg.validate();
  require(f.size() == S.nodes.size(), "amplitude size does not match the surface");
  const double rho = cap.radius;
  for (std::size_t k = 0; k < f.size(); ++k)
    if (f[k] != 0.0 && norm(S.nodes[k].omega - cap.center) > rho * (1.0 + 1e-9))
      throw InvalidArgument("wave packet input is not supported in the cap (node " + std::to_string(k) + ")");

  WavePacketSet out;
  out.cap = cap.id;
  out.cap_center = cap.center;
  out.cap_radius = rho;
  out.config = cfg;
  out.f_l1 = f.norms().l1;
  out.f_l2 = f.norms().l2;
  out.period = static_cast<double>(S.resolution);

  int n = static_cast<int>(std::ceil(8.0 * rho * S.resolution));
  n += n % 2;
  const int ic = S.cell_of(cap.center[0]), jc = S.cell_of(cap.center[1]);
  const int i0 = ic - n / 2, j0 = jc - n / 2;
  const double kstep = static_cast<double>(S.resolution) / n;  // 1 / (n h)
  out.partition = frequency_partition(rho, cfg, static_cast<double>(S.resolution));
  const auto& P = out.partition;

  // Nodes of 3 theta carried by the box, with their cutoff values.
  struct Slot {
    int node, a, b;
    double psi;
  };
  std::vector<Slot> slots;
  double wmax = 0.0, wmin = 1e300;
  for (int k : nodes_in_disc(S, cap.center, 2.9 * rho)) {
    const auto& nd = S.nodes[k];
    int a = nd.i - i0, b = nd.j - j0;
    if (a < 0 || b < 0 || a >= n || b >= n) continue;
    double psi = cap_cutoff(norm(nd.omega - cap.center), rho);
    if (psi <= 0.0) continue;
    slots.push_back({k, a, b, psi});
    wmax = std::max(wmax, nd.weight);
  }
  for (std::size_t k = 0; k < f.size(); ++k)
    if (f[k] != 0.0) wmin = std::min(wmin, S.nodes[k].weight);

  const std::size_t N = static_cast<std::size_t>(n) * n;
  detail::FftwBuffer F(N);
  std::fill(reinterpret_cast<double*>(F.p), reinterpret_cast<double*>(F.p) + 2 * N, 0.0);
  bool any = false;
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (f[k] == 0.0) continue;
    int a = S.nodes[k].i - i0, b = S.nodes[k].j - j0;
    require(a >= 0 && b >= 0 && a < n && b < n, "cap support exceeds the transform box");
    F.p[a * n + b][0] = f[k].real();
    F.p[a * n + b][1] = f[k].imag();
    any = true;
  }
  if (!any) {
    out.frame_constant = 1.0;
    return out;
  }
  detail::FftwPlan fwd, inv;
  {
    detail::FftwBuffer tmp(N);
    std::lock_guard<std::mutex> g(detail::fftw_plan_mutex());
    fwd.p = fftw_plan_dft_2d(n, n, F.p, F.p, FFTW_FORWARD, FFTW_ESTIMATE);
    inv.p = fftw_plan_dft_2d(n, n, tmp.p, tmp.p, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  if (!fwd.p || !inv.p) throw ResourceError("FFTW plan creation failed");
  fftw_execute(fwd.p);

  // Per ball: the frequency-grid entries with phi_D > 0.
  std::vector<std::vector<std::pair<int, double>>> entries(P.size());
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      Vec2 k{(a < n / 2 ? a : a - n) * kstep, (b < n / 2 ? b : b - n) * kstep};
      for (const auto& [d, v] : P.weights_at(k)) entries[d].push_back({a * n + b, v});
    }
  std::vector<int> active;
  for (std::size_t d = 0; d < entries.size(); ++d)
    if (!entries[d].empty()) active.push_back(static_cast<int>(d));

  std::vector<WavePacket> packets(active.size());
  const double norm_fft = 1.0 / static_cast<double>(N);
  parallel_for(active.size(), [&](std::size_t lo, std::size_t hi) {
    detail::FftwBuffer buf(N);
    for (std::size_t t = lo; t < hi; ++t) {
      int d = active[t];
      std::fill(reinterpret_cast<double*>(buf.p), reinterpret_cast<double*>(buf.p) + 2 * N, 0.0);
      double mass = 0.0;
      for (const auto& [at, v] : entries[d]) {
        buf.p[at][0] = v * F.p[at][0];
        buf.p[at][1] = v * F.p[at][1];
        mass += buf.p[at][0] * buf.p[at][0] + buf.p[at][1] * buf.p[at][1];
      }
      WavePacket& pk = packets[t];
      pk.ball = d;
      if (mass == 0.0) continue;
      fftw_execute_dft(inv.p, buf.p, buf.p);
      pk.values.reserve(slots.size());
      for (const auto& s : slots) {
        const auto& z = buf.p[s.a * n + s.b];
        cplx v = cplx(z[0], z[1]) * (norm_fft * s.psi);
        pk.values.push_back(v);
        pk.l2sq += std::norm(v) * S.nodes[s.node].weight;
      }
    }
  });

  for (const auto& sl : slots) out.nodes.push_back(sl.node);
  int id = 0;
  for (auto& pk : packets) {
    if (pk.values.empty()) continue;
    pk.tube.id = id++;
    pk.tube.cap = cap.id;
    pk.tube.direction = cap.normal;
    pk.tube.ball_center = P.center(pk.ball);
    pk.tube.point = {pk.tube.ball_center[0], pk.tube.ball_center[1], 0.0};
    pk.tube.radius = cfg.tube_radius();
    pk.tube.half_length = cfg.R;
    out.packet_l2sq_total += pk.l2sq;
    out.packets.push_back(std::move(pk));
  }

  // Reconstruction audit on all nodes carrying f or a packet.
  std::unordered_map<int, cplx> sum;
  for (const auto& pk : out.packets)
    for (std::size_t t = 0; t < out.nodes.size(); ++t) sum[out.nodes[t]] += pk.values[t];
  for (std::size_t k = 0; k < f.size(); ++k)
    if (f[k] != 0.0) sum.emplace(static_cast<int>(k), 0.0);
  for (const auto& [k, v] : sum) out.residual_l1 += std::abs(f[k] - v) * S.nodes[k].weight;
  out.frame_constant = wmax / wmin;
  return out;
}

// max |E f_T(x)| / ||f||_{L^1(S)} over sample points at distance >= 2 radius
// from the tube.
inline double off_tube_decay(const SurfaceGraph& S, const WavePacketSet& set, std::size_t k,
                             const std::vector<Vec3>& points) {
  require(k < set.packets.size(), "packet index out of range");
  const Tube& T = set.packets[k].tube;
  std::vector<Vec3> valid;
  for (const auto& x : points)
    if (T.distance(x, set.period) >= 2.0 * T.radius) valid.push_back(x);
  if (valid.empty()) throw InvalidArgument("off-tube decay needs sample points at distance >= 2 tube radii");
  if (set.f_l1 == 0.0) return 0.0;
  auto E = set.evaluator(S, k);
  auto v = E.eval(valid);
  double best = 0.0;
  for (auto z : v) best = std::max(best, std::abs(z));
  return best / set.f_l1;
}

// |<f_T1, f_T2>_sigma| for two packets of one set.
inline double packet_inner_product(const SurfaceGraph& S, const WavePacketSet& set, std::size_t a, std::size_t b) {
  require(a < set.packets.size() && b < set.packets.size(), "packet index out of range");
  const auto& va = set.packets[a].values;
  const auto& vb = set.packets[b].values;
  cplx s = 0.0;
  for (std::size_t t = 0; t < set.nodes.size(); ++t) s += va[t] * std::conj(vb[t]) * S.nodes[set.nodes[t]].weight;
  return std::abs(s);
}

// (sum over T with x in dilation * T of E f_T(x), sum over the other T of |E f_T(x)|).
struct TubeSum {
  cplx inside = 0.0;
  double outside_abs = 0.0;
};

inline TubeSum tube_sum(const SurfaceGraph& S, const std::vector<WavePacketSet>& sets, const Vec3& x,
                        double dilation = 1.0) {
  require(dilation >= 1.0, "tube dilation must be at least 1");
  TubeSum out;
  for (const auto& set : sets)
    for (std::size_t k = 0; k < set.packets.size(); ++k) {
      const Tube& T = set.packets[k].tube;
      cplx v = set.evaluator(S, k)(x);
      if (T.distance(x, set.period) <= dilation * T.radius)
        out.inside += v;
      else
        out.outside_abs += std::abs(v);
    }
  return out;
}

}  // namespace rlab
