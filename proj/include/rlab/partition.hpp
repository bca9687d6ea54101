#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "rlab/core.hpp"
#include "rlab/extension.hpp"
#include "rlab/geometry.hpp"
#include "rlab/wavepacket.hpp"

namespace rlab {

// Polynomial on R^3 written in the normalized coordinates u = x / scale.
struct Polynomial3 {
  int degree = 0;
  double scale = 1.0;
  std::vector<std::array<int, 3>> exps;
  std::vector<double> coeffs;

  static std::vector<std::array<int, 3>> monomials(int d) {
    std::vector<std::array<int, 3>> e;
    for (int t = 0; t <= d; ++t)
      for (int a = t; a >= 0; --a)
        for (int b = t - a; b >= 0; --b) e.push_back({a, b, t - a - b});
    return e;
  }
  static Polynomial3 zero(int d, double scale) {
    require(d >= 1 && d <= 8, "polynomial degree must be in [1, 8]");
    require(scale > 0.0, "polynomial scale must be positive");
    Polynomial3 P;
    P.degree = d;
    P.scale = scale;
    P.exps = monomials(d);
    P.coeffs.assign(P.exps.size(), 0.0);
    return P;
  }
  // n . x - offset, up to the positive factor 1 / scale.
  static Polynomial3 plane(const Vec3& n, double offset, double scale, int degree = 1) {
    Polynomial3 P = zero(degree, scale);
    P.coeffs[0] = -offset / scale;
    P.coeffs[1] = n[0];
    P.coeffs[2] = n[1];
    P.coeffs[3] = n[2];
    return P;
  }
  std::size_t size() const { return coeffs.size(); }

  void basis(const Vec3& x, double* out) const {
    double pw[3][9];
    for (int c = 0; c < 3; ++c) {
      pw[c][0] = 1.0;
      for (int k = 1; k <= degree; ++k) pw[c][k] = pw[c][k - 1] * (x[c] / scale);
    }
    for (std::size_t m = 0; m < exps.size(); ++m) out[m] = pw[0][exps[m][0]] * pw[1][exps[m][1]] * pw[2][exps[m][2]];
  }
  double value(const Vec3& x) const {
    double b[165];
    basis(x, b);
    double s = 0.0;
    for (std::size_t m = 0; m < coeffs.size(); ++m) s += coeffs[m] * b[m];
    return s;
  }
  // Gradient with respect to u.
  Vec3 gradient_u(const Vec3& x) const {
    double pw[3][9];
    for (int c = 0; c < 3; ++c) {
      pw[c][0] = 1.0;
      for (int k = 1; k <= degree; ++k) pw[c][k] = pw[c][k - 1] * (x[c] / scale);
    }
    Vec3 g{0, 0, 0};
    for (std::size_t m = 0; m < exps.size(); ++m) {
      const auto& e = exps[m];
      if (e[0] > 0) g[0] += coeffs[m] * e[0] * pw[0][e[0] - 1] * pw[1][e[1]] * pw[2][e[2]];
      if (e[1] > 0) g[1] += coeffs[m] * e[1] * pw[0][e[0]] * pw[1][e[1] - 1] * pw[2][e[2]];
      if (e[2] > 0) g[2] += coeffs[m] * e[2] * pw[0][e[0]] * pw[1][e[1]] * pw[2][e[2] - 1];
    }
    return g;
  }
  Vec3 gradient(const Vec3& x) const { return (1.0 / scale) * gradient_u(x); }
  void normalize() {
    double s = 0.0;
    for (double c : coeffs) s += c * c;
    require(s > 0.0, "cannot normalize the zero polynomial");
    for (double& c : coeffs) c /= std::sqrt(s);
  }
};

// Newton projection of x onto Z(Q); nullopt if it does not converge.
inline std::optional<Vec3> project_to_zero_set(const Polynomial3& Q, const Vec3& x, int iterations = 30) {
  Vec3 z = x;
  for (int it = 0; it < iterations; ++it) {
    double q = Q.value(z);
    Vec3 g = Q.gradient(z);
    double g2 = dot(g, g);
    if (g2 == 0.0) return std::nullopt;
    if (std::abs(q) / std::sqrt(g2) <= 1e-10 * Q.scale) return z;
    z = z - (q / g2) * g;
  }
  double q = Q.value(z);
  double gn = norm(Q.gradient(z));
  if (gn > 0.0 && std::abs(q) / gn <= 1e-10 * Q.scale) return z;
  return std::nullopt;
}

// min(|Q| / |grad Q|, Newton projection distance); Newton only near the set.
inline double zero_set_distance(const Polynomial3& Q, const Vec3& x, double near) {
  double q = Q.value(x);
  double gn = norm(Q.gradient(x));
  double first = gn > 0.0 ? std::abs(q) / gn : std::numeric_limits<double>::infinity();
  if (first > 2.0 * near) return first;
  auto z = project_to_zero_set(Q, x);
  return z ? std::min(first, norm(*z - x)) : first;
}

// Cubic grid of n^3 cell centers on [-L, L]^3.
struct PartitionGrid {
  double half_width = 1.0;
  int n = 32;

  double step() const { return 2.0 * half_width / n; }
  double coord(int i) const { return -half_width + (i + 0.5) * step(); }
  std::size_t size() const { return static_cast<std::size_t>(n) * n * n; }
  std::size_t index(int i, int j, int k) const { return (static_cast<std::size_t>(i) * n + j) * n + k; }
  Vec3 point(std::size_t idx) const {
    int k = static_cast<int>(idx % n), j = static_cast<int>((idx / n) % n), i = static_cast<int>(idx / (static_cast<std::size_t>(n) * n));
    return {coord(i), coord(j), coord(k)};
  }
  double cell_volume() const { return step() * step() * step(); }
  bool inside(const Vec3& x) const {
    return std::abs(x[0]) <= half_width && std::abs(x[1]) <= half_width && std::abs(x[2]) <= half_width;
  }
  std::size_t locate(const Vec3& x) const {
    auto c = [&](double t) { return std::clamp(static_cast<int>(std::floor((t + half_width) / step())), 0, n - 1); };
    return index(c(x[0]), c(x[1]), c(x[2]));
  }
  void validate() const {
    require(half_width > 0.0, "partition grid needs a positive half width");
    require(n >= 4 && n <= 256, "partition grid size must be in [4, 256]");
  }
};

template <class Fn>
std::vector<double> sample_grid(const PartitionGrid& G, Fn&& fn) {
  std::vector<double> F(G.size());
  for (std::size_t i = 0; i < F.size(); ++i) F[i] = fn(G.point(i));
  return F;
}

struct Partition {
  PartitionGrid grid;
  std::vector<Polynomial3> factors;
  int degree = 0;
  double wall_radius = 0.0;
  std::vector<std::uint32_t> signs;
  std::vector<int> labels;  // connected component of the sign vector, 6-neighbour
  int cell_count = 0;
  std::vector<double> cell_masses;
  std::vector<double> wall_distance;
  std::vector<std::uint8_t> wall_mask;
  double mass_ratio = 0.0;  // max / min over nonempty cells
  bool used_fallback = false;
  int perturbations = 0;
  std::vector<int> stage_degrees;

  double cell_constant() const { return degree > 0 ? cell_count / std::pow(degree, 3.0) : 0.0; }
  double wall_volume_fraction() const {
    std::size_t w = 0;
    for (auto b : wall_mask) w += b;
    return wall_mask.empty() ? 0.0 : static_cast<double>(w) / wall_mask.size();
  }
  std::uint32_t sign_vector(const Vec3& x) const {
    std::uint32_t s = 0;
    for (std::size_t k = 0; k < factors.size(); ++k)
      if (factors[k].value(x) >= 0.0) s |= 1u << k;
    return s;
  }
  double distance_to_zero_set(const Vec3& x) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& Q : factors) d = std::min(d, zero_set_distance(Q, x, std::max(wall_radius, grid.step())));
    return d;
  }
  double value(const Vec3& x) const {
    double p = 1.0;
    for (const auto& Q : factors) p *= Q.value(x);
    return p;
  }
};

namespace detail {

inline std::vector<int> flood_fill(const PartitionGrid& G, const std::vector<std::uint32_t>& signs, int& count) {
  std::vector<int> label(G.size(), -1);
  count = 0;
  std::vector<std::size_t> stack;
  const int n = G.n;
  for (std::size_t s = 0; s < G.size(); ++s) {
    if (label[s] >= 0) continue;
    label[s] = count;
    stack.assign(1, s);
    while (!stack.empty()) {
      std::size_t c = stack.back();
      stack.pop_back();
      int k = static_cast<int>(c % n), j = static_cast<int>((c / n) % n), i = static_cast<int>(c / (static_cast<std::size_t>(n) * n));
      const int nb[6][3] = {{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k}, {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= n || q[1] >= n || q[2] >= n) continue;
        std::size_t t = G.index(q[0], q[1], q[2]);
        if (label[t] < 0 && signs[t] == signs[s]) {
          label[t] = count;
          stack.push_back(t);
        }
      }
    }
    ++count;
  }
  return label;
}

inline double mass_ratio(const std::vector<double>& masses) {
  double mx = 0.0, mn = std::numeric_limits<double>::infinity();
  for (double m : masses)
    if (m > 0.0) {
      mx = std::max(mx, m);
      mn = std::min(mn, m);
    }
  return mx > 0.0 ? mx / mn : std::numeric_limits<double>::infinity();
}

// Smallest |grad Q| (in u units) over Newton samples of Z(Q) in the box; +inf if Z(Q) misses the box.
inline double min_gradient_on_zero_set(const Polynomial3& Q, const PartitionGrid& G) {
  double best = std::numeric_limits<double>::infinity();
  const int stride = std::max(1, G.n / 16);
  for (int i = 0; i < G.n; i += stride)
    for (int j = 0; j < G.n; j += stride)
      for (int k = 0; k < G.n; k += stride) {
        Vec3 x{G.coord(i), G.coord(j), G.coord(k)};
        double gn = norm(Q.gradient(x));
        if (gn > 0.0 && std::abs(Q.value(x)) / gn > 2.0 * stride * G.step()) continue;
        if (gn == 0.0 && Q.value(x) != 0.0) continue;
        auto z = project_to_zero_set(Q, x);
        if (z && G.inside(*z)) best = std::min(best, norm(Q.gradient_u(*z)));
        if (!z && gn == 0.0) best = 0.0;
      }
  return best;
}

}  // namespace detail

// Labels, masses and wall of the partition cut out by the given factors.
// F may be empty (uniform mass).
inline Partition build_partition(const PartitionGrid& G, std::vector<Polynomial3> factors, const std::vector<double>& F,
                                 double wall_radius, bool enforce_nonsingular = true) {
  G.validate();
  require(!factors.empty() && factors.size() <= 32, "a partition needs between 1 and 32 factors");
  require(F.empty() || F.size() == G.size(), "mass grid size does not match the partition grid");
  require(wall_radius >= 0.0, "wall radius must be nonnegative");
  Partition P;
  P.grid = G;
  P.wall_radius = wall_radius;
  if (enforce_nonsingular)
    for (auto& Q : factors)
      for (int attempt = 0; attempt < 4 && detail::min_gradient_on_zero_set(Q, G) < 1e-8; ++attempt) {
        Q.coeffs[0] -= 1e-6;
        ++P.perturbations;
      }
  for (const auto& Q : factors) {
    require(Q.scale > 0.0 && !Q.coeffs.empty(), "partition factor is not initialized");
    P.degree += Q.degree;
  }
  P.factors = std::move(factors);
  P.signs.resize(G.size());
  P.wall_distance.resize(G.size());
  parallel_for(G.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Vec3 x = G.point(i);
      P.signs[i] = P.sign_vector(x);
      P.wall_distance[i] = P.distance_to_zero_set(x);
    }
  });
  P.labels = detail::flood_fill(G, P.signs, P.cell_count);
  P.cell_masses.assign(P.cell_count, 0.0);
  for (std::size_t i = 0; i < G.size(); ++i) P.cell_masses[P.labels[i]] += (F.empty() ? 1.0 : F[i]) * G.cell_volume();
  P.wall_mask.resize(G.size());
  for (std::size_t i = 0; i < G.size(); ++i) P.wall_mask[i] = P.wall_distance[i] <= wall_radius ? 1 : 0;
  P.mass_ratio = detail::mass_ratio(P.cell_masses);
  return P;
}

struct EquidistributeOptions {
  int grid_n = 48;
  int starts = 8;
  std::uint64_t seed = 1;
  double wall_radius = 0.0;
  int iterations_per_level = 15;
};

// Stage degrees for iterated bisection: stage s bisects 2^{s-1} cells, which
// degree d can do when its coefficient space has dimension >= 2^{s-1} + 1.
inline std::vector<int> stage_degrees(int D) {
  require(D >= 1 && D <= 8, "equidistribution supports total degree 1 <= D <= 8");
  std::vector<int> out;
  int used = 0;
  for (int s = 1;; ++s) {
    int cells = 1 << (s - 1);
    int d = 1;
    while (static_cast<int>(Polynomial3::monomials(d).size()) - 1 < cells) ++d;
    if (used + d > D) break;
    out.push_back(d);
    used += d;
  }
  return out;
}

namespace detail {

// Soft bisection of every region: residual_i = sum_{x in i} F tanh(Q / eps) / M_i.
struct BisectionProblem {
  const std::vector<double>& F;
  const std::vector<int>& region;
  int regions;
  std::vector<double> B;  // grid size x K basis values
  std::size_t K;
  std::vector<double> M;

  double residual(const Eigen::VectorXd& c, double eps, Eigen::VectorXd& r, Eigen::MatrixXd* J) const {
    r.setZero(regions);
    if (J) J->setZero(regions, K);
    const std::size_t N = F.size();
    for (std::size_t i = 0; i < N; ++i) {
      if (F[i] == 0.0) continue;
      const double* b = &B[i * K];
      double q = 0.0;
      for (std::size_t k = 0; k < K; ++k) q += c[k] * b[k];
      double t = std::tanh(q / eps);
      int g = region[i];
      r[g] += F[i] * t;
      if (J) {
        double w = F[i] * (1.0 - t * t) / eps;
        for (std::size_t k = 0; k < K; ++k) (*J)(g, k) += w * b[k];
      }
    }
    for (int g = 0; g < regions; ++g) {
      r[g] /= M[g];
      if (J) J->row(g) /= M[g];
    }
    return r.squaredNorm();
  }
};

inline double weighted_median(const PartitionGrid& G, const std::vector<double>& F, int axis) {
  std::vector<double> marg(G.n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < G.size(); ++i) {
    std::size_t a = axis == 0 ? i / (static_cast<std::size_t>(G.n) * G.n) : axis == 1 ? (i / G.n) % G.n : i % G.n;
    marg[a] += F[i];
    total += F[i];
  }
  double acc = 0.0;
  for (int a = 0; a < G.n; ++a) {
    if (acc + marg[a] >= 0.5 * total) {
      double frac = marg[a] > 0.0 ? (0.5 * total - acc) / marg[a] : 0.5;
      return -G.half_width + (a + frac) * G.step();
    }
    acc += marg[a];
  }
  return 0.0;
}

// D slabs plus one, at mass quantiles along the widest axis.
inline std::vector<Polynomial3> quantile_planes(const PartitionGrid& G, const std::vector<double>& F, int D) {
  std::vector<double> marg(G.n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < G.size(); ++i) {
    marg[i / (static_cast<std::size_t>(G.n) * G.n)] += F[i];
    total += F[i];
  }
  std::vector<Polynomial3> out;
  double acc = 0.0;
  int q = 1;
  for (int a = 0; a < G.n && q <= D; ++a) {
    double next = acc + marg[a];
    while (q <= D && next >= q * total / (D + 1)) {
      // Cut at the nearer layer boundary.
      double target = q * total / (D + 1);
      int boundary = (target - acc < next - target) ? a : a + 1;
      out.push_back(Polynomial3::plane({1, 0, 0}, -G.half_width + boundary * G.step(), G.half_width));
      ++q;
    }
    acc = next;
  }
  return out;
}

}  // namespace detail

// Iterated polynomial bisection driving equal cell masses of F.
inline Partition equidistribute(const PartitionGrid& G, const std::vector<double>& F, int D,
                                const EquidistributeOptions& opt = {}) {
  G.validate();
  require(F.size() == G.size(), "mass grid size does not match the partition grid");
  double total = 0.0;
  for (double v : F) {
    require(v >= 0.0 && std::isfinite(v), "equidistribution needs a nonnegative finite F");
    total += v;
  }
  if (total <= 0.0) throw InvalidArgument("equidistribution needs F with positive total mass");
  const auto degrees = stage_degrees(D);

  std::vector<Polynomial3> chosen;
  std::vector<int> region(G.size(), 0);
  int regions = 1;
  std::vector<std::uint32_t> signs(G.size(), 0);
  for (std::size_t s = 0; s < degrees.size(); ++s) {
    const int d = degrees[s];
    auto exps = Polynomial3::monomials(d);
    const std::size_t K = exps.size();
    detail::BisectionProblem prob{F, region, regions, {}, K, std::vector<double>(regions, 0.0)};
    prob.B.resize(G.size() * K);
    Polynomial3 proto = Polynomial3::zero(d, G.half_width);
    for (std::size_t i = 0; i < G.size(); ++i) {
      proto.basis(G.point(i), &prob.B[i * K]);
      prob.M[region[i]] += F[i];
    }
    for (auto& m : prob.M) m = std::max(m, 1e-300);

    std::mt19937_64 rng(opt.seed + 1000 * s);
    std::normal_distribution<double> N01(0.0, 1.0);
    double best_ratio = std::numeric_limits<double>::infinity();
    Polynomial3 best;
    std::vector<std::uint32_t> best_signs;
    std::vector<int> best_labels;
    int best_count = 0;
    for (int t = 0; t < std::max(1, opt.starts); ++t) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(K);
      if (t < 3) {
        int axis = static_cast<int>((s + t) % 3);
        c[0] = -detail::weighted_median(G, F, axis) / G.half_width;
        c[1 + axis] = 1.0;
      } else {
        for (std::size_t k = 0; k < K; ++k) c[k] = N01(rng);
      }
      c.normalize();
      // Annealed Levenberg-Marquardt on the unit sphere.
      Eigen::VectorXd r, r2;
      Eigen::MatrixXd J;
      for (double level : {0.5, 0.2, 0.08, 0.03}) {
        double q2 = 0.0;
        for (std::size_t i = 0; i < G.size(); ++i) {
          double q = 0.0;
          for (std::size_t k = 0; k < K; ++k) q += c[k] * prob.B[i * K + k];
          q2 += F[i] * q * q;
        }
        double eps = std::max(level * std::sqrt(q2 / total), 1e-12);
        double lambda = 1e-3;
        double cost = prob.residual(c, eps, r, &J);
        for (int it = 0; it < opt.iterations_per_level && cost > 1e-16; ++it) {
          Eigen::MatrixXd H = J.transpose() * J;
          Eigen::VectorXd g = J.transpose() * r;
          bool accepted = false;
          for (int tries = 0; tries < 8 && !accepted; ++tries) {
            Eigen::MatrixXd A = H + lambda * Eigen::MatrixXd::Identity(K, K);
            Eigen::VectorXd step = A.ldlt().solve(-g);
            Eigen::VectorXd trial = (c + step).normalized();
            double tc = prob.residual(trial, eps, r2, nullptr);
            if (tc < cost) {
              c = trial;
              lambda = std::max(lambda / 3.0, 1e-9);
              accepted = true;
            } else {
              lambda *= 4.0;
            }
          }
          if (!accepted) break;
          cost = prob.residual(c, eps, r, &J);
        }
      }
      Polynomial3 Q = proto;
      for (std::size_t k = 0; k < K; ++k) Q.coeffs[k] = c[k];
      std::vector<std::uint32_t> trial_signs(signs);
      for (std::size_t i = 0; i < G.size(); ++i) {
        double q = 0.0;
        for (std::size_t k = 0; k < K; ++k) q += c[k] * prob.B[i * K + k];
        if (q >= 0.0) trial_signs[i] |= 1u << s;
      }
      int count = 0;
      auto labels = detail::flood_fill(G, trial_signs, count);
      std::vector<double> masses(count, 0.0);
      for (std::size_t i = 0; i < G.size(); ++i) masses[labels[i]] += F[i];
      double ratio = detail::mass_ratio(masses);
      if (ratio < best_ratio) {
        best_ratio = ratio;
        best = Q;
        best_signs = std::move(trial_signs);
        best_labels = std::move(labels);
        best_count = count;
      }
      if (best_ratio <= 1.05) break;
    }
    chosen.push_back(best);
    signs = std::move(best_signs);
    region = std::move(best_labels);
    regions = best_count;
  }

  Partition P = build_partition(G, chosen, F, opt.wall_radius);
  P.stage_degrees = degrees;
  if (P.mass_ratio > 2.0) {
    Partition Q = build_partition(G, detail::quantile_planes(G, F, D), F, opt.wall_radius);
    Q.used_fallback = true;
    Q.stage_degrees.assign(D, 1);
    return Q;
  }
  return P;
}

struct Line {
  Vec3 point;
  Vec3 direction;
};

struct LineCrossings {
  int intervals = 0;  // maximal runs of constant sign vector
  int cells = 0;      // distinct cell labels entered
};

// Samples the part of the line inside the grid box.
inline LineCrossings line_cell_crossings(const Partition& P, const Line& L, int samples = 4096) {
  require(norm(L.direction) > 0.0, "line direction must be nonzero");
  const double H = P.grid.half_width;
  double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
  for (int c = 0; c < 3; ++c) {
    if (L.direction[c] == 0.0) {
      if (std::abs(L.point[c]) > H) return {};
      continue;
    }
    double a = (-H - L.point[c]) / L.direction[c], b = (H - L.point[c]) / L.direction[c];
    t0 = std::max(t0, std::min(a, b));
    t1 = std::min(t1, std::max(a, b));
  }
  if (!(t1 > t0)) return {};
  LineCrossings out;
  std::set<int> cells;
  std::uint32_t run_sign = 0;
  bool run_labelled = false;
  for (int s = 0; s < samples; ++s) {
    double t = t0 + (t1 - t0) * (s + 0.5) / samples;
    Vec3 x = L.point + t * L.direction;
    std::uint32_t sg = P.sign_vector(x);
    if (s == 0 || sg != run_sign) {
      ++out.intervals;
      run_sign = sg;
      run_labelled = false;
    }
    if (!run_labelled) {
      std::size_t g = P.grid.locate(x);
      if (P.signs[g] == sg) {
        cells.insert(P.labels[g]);
        run_labelled = true;
      }
    }
  }
  out.cells = static_cast<int>(cells.size());
  return out;
}

// Modified cells O_i' = O_i minus the wall entered by the tube (grid points within the tube radius).
inline std::vector<int> tube_cell_membership(const Partition& P, const Tube& T) {
  std::set<int> cells;
  for (std::size_t i = 0; i < P.grid.size(); ++i) {
    if (P.wall_mask[i]) continue;
    if (T.distance(P.grid.point(i)) <= T.radius) cells.insert(P.labels[i]);
  }
  return {cells.begin(), cells.end()};
}

struct Ball {
  Vec3 center;
  double radius = 0.0;
  bool contains(const Vec3& x, double dilation = 1.0) const { return norm(x - center) <= dilation * radius; }
};

// Balls of radius R^{1-delta} on a cubic lattice covering B(0, R).
inline std::vector<Ball> ball_cover(double R, double delta) {
  require(R > 1.0 && delta > 0.0 && delta < 1.0, "ball cover needs R > 1 and 0 < delta < 1");
  double r = std::pow(R, 1.0 - delta);
  double s = 2.0 * r / std::sqrt(3.0);
  int n = static_cast<int>(std::ceil((R + r) / s));
  std::vector<Ball> out;
  for (int a = -n; a <= n; ++a)
    for (int b = -n; b <= n; ++b)
      for (int c = -n; c <= n; ++c) {
        Vec3 x{a * s, b * s, c * s};
        if (norm(x) <= R + r) out.push_back({x, r});
      }
  return out;
}

enum class TubeClass { disjoint, tangent, transverse };

inline const char* to_string(TubeClass c) {
  switch (c) {
    case TubeClass::tangent: return "tangent";
    case TubeClass::transverse: return "transverse";
    default: return "disjoint";
  }
}

struct TubeClassification {
  double threshold = 0.0;  // R^{-1/2 + 2 delta}
  std::vector<std::vector<TubeClass>> cls;  // [tube][ball]
  std::vector<std::vector<double>> angle;   // largest sampled angle, NaN if disjoint
  std::vector<int> caps;                    // cap id per tube
};

// One Z(P) sample: Newton point on the factor nearest x, with its unit normal.
namespace detail {

struct ZeroSample {
  Vec3 z;
  Vec3 normal;
};

inline std::optional<ZeroSample> zero_sample(const Partition& P, const Vec3& x, double tol) {
  int s = -1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < P.factors.size(); ++k) {
    const auto& Q = P.factors[k];
    double gn = norm(Q.gradient(x));
    double d = gn > 0.0 ? std::abs(Q.value(x)) / gn : std::numeric_limits<double>::infinity();
    if (d < best) {
      best = d;
      s = static_cast<int>(k);
    }
  }
  if (s < 0) return std::nullopt;
  auto z = project_to_zero_set(P.factors[s], x);
  if (!z) return std::nullopt;
  Vec3 g = P.factors[s].gradient_u(*z);
  double others = 1.0;
  for (std::size_t k = 0; k < P.factors.size(); ++k)
    if (static_cast<int>(k) != s) others *= std::abs(P.factors[k].value(*z));
  if (others * norm(g) < tol) return std::nullopt;
  return ZeroSample{*z, (1.0 / norm(g)) * g};
}

}  // namespace detail

// Tangent iff Angle(v(T), T_z Z(P)) <= R^{-1/2 + 2 delta} at every sampled
// nonsingular z in Z(P) within 2 B_j and 10 T; disjoint if T misses W within B_j.
inline TubeClassification classify_tubes(const Partition& P, const std::vector<Tube>& tubes, const std::vector<Ball>& balls,
                                         double R, double delta, double singular_tol = 1e-8) {
  require(!balls.empty(), "tube classification needs at least one ball");
  TubeClassification out;
  out.threshold = std::pow(R, -0.5 + 2.0 * delta);
  out.cls.assign(tubes.size(), std::vector<TubeClass>(balls.size(), TubeClass::disjoint));
  out.angle.assign(tubes.size(), std::vector<double>(balls.size(), std::numeric_limits<double>::quiet_NaN()));
  for (const auto& T : tubes) out.caps.push_back(T.cap);
  const double step = P.grid.step();
  std::vector<std::string> errors(tubes.size());
  parallel_for(tubes.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t t = lo; t < hi; ++t) {
      const Tube& T = tubes[t];
      Tube wide = T;
      wide.radius *= 10.0;
      wide.half_length *= 10.0;
      std::vector<std::size_t> hit, seeds;
      for (std::size_t i = 0; i < P.grid.size(); ++i) {
        if (!P.wall_mask[i]) continue;
        Vec3 x = P.grid.point(i);
        double d = T.distance(x);
        if (d <= T.radius) hit.push_back(i);
        if (d <= wide.radius) seeds.push_back(i);
      }
      for (std::size_t j = 0; j < balls.size() && errors[t].empty(); ++j) {
        const Ball& B = balls[j];
        bool meets = std::any_of(hit.begin(), hit.end(), [&](std::size_t i) { return B.contains(P.grid.point(i)); });
        if (!meets) continue;
        double worst = -1.0;
        int found = 0;
        for (double near : {step, P.wall_radius}) {
          std::vector<std::size_t> pool;
          for (std::size_t i : seeds)
            if (P.wall_distance[i] <= near && B.contains(P.grid.point(i), 2.0)) pool.push_back(i);
          const std::size_t stride = std::max<std::size_t>(1, pool.size() / 64);
          worst = -1.0;
          found = 0;
          for (std::size_t q = 0; q < pool.size(); q += stride) {
            auto zs = detail::zero_sample(P, P.grid.point(pool[q]), singular_tol);
            if (!zs || !B.contains(zs->z, 2.0) || wide.distance(zs->z) > wide.radius) continue;
            double ang = std::asin(std::min(1.0, std::abs(dot(T.direction, zs->normal))));
            worst = std::max(worst, ang);
            ++found;
          }
          if (found >= 8) break;
        }
        if (found < 8) {
          errors[t] = "tube " + std::to_string(t) + " ball " + std::to_string(j) +
                      ": fewer than 8 nonsingular samples of Z(P)";
          break;
        }
        out.angle[t][j] = worst;
        out.cls[t][j] = worst <= out.threshold ? TubeClass::tangent : TubeClass::transverse;
      }
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw NumericalError("tube classification failed: " + e);
  return out;
}

// Distinct caps with a tube tangent in ball j.
inline int tangential_direction_count(const TubeClassification& C, std::size_t j) {
  std::set<int> caps;
  for (std::size_t t = 0; t < C.cls.size(); ++t) {
    require(j < C.cls[t].size(), "ball index out of range");
    if (C.cls[t][j] == TubeClass::tangent) caps.insert(C.caps[t]);
  }
  return static_cast<int>(caps.size());
}

struct BroadConfig {
  double K = 4.0;
  double beta = 0.5;
  int m = 1;
};

// Broad points need beta >= 1 / #caps: otherwise some |E f_tau| >= beta |Ef| by the triangle inequality.
inline double broad_beta_floor(const CapCover& cover) {
  require(!cover.caps.empty(), "broad part needs a nonempty cap cover");
  return 1.0 / cover.caps.size();
}

struct BroadResult {
  std::vector<double> ef;                   // |Ef(x)|
  std::vector<std::vector<double>> tau;     // [point][cap] |E f_tau(x)|
  std::vector<double> max_tau;
  std::vector<double> broad;                // Br_beta Ef(x)
  std::vector<std::uint8_t> is_broad;
};

// f_tau is f on the nodes owned by tau.
inline std::vector<AmplitudeFunction> split_by_cover(const SurfaceGraph& S, const AmplitudeFunction& f, const CapCover& cover) {
  require(!cover.caps.empty(), "broad part needs a nonempty cap cover");
  require(cover.owner.size() == S.nodes.size(), "cap cover does not match the surface");
  std::vector<std::vector<cplx>> parts(cover.caps.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (f[k] == 0.0) continue;
    int o = cover.owner[k];
    if (o < 0) throw InvalidArgument("amplitude is nonzero on a node not covered by the caps");
    if (parts[o].empty()) parts[o].assign(S.nodes.size(), 0.0);
    parts[o][k] = f[k];
  }
  std::vector<AmplitudeFunction> out;
  for (auto& p : parts) out.push_back(p.empty() ? AmplitudeFunction() : AmplitudeFunction(S, std::move(p)));
  return out;
}

inline BroadResult broad_part(const SurfaceGraph& S, const AmplitudeFunction& f, const CapCover& cover, double beta,
                              const std::vector<Vec3>& points) {
  require(!cover.caps.empty(), "broad part needs a nonempty cap cover");
  require(beta > 0.0 && beta <= 1.0, "broad part needs 0 < beta <= 1");
  auto parts = split_by_cover(S, f, cover);
  BroadResult out;
  auto ef = ExtensionEvaluator(S, f).eval(points);
  out.tau.assign(points.size(), std::vector<double>(cover.caps.size(), 0.0));
  for (std::size_t c = 0; c < parts.size(); ++c) {
    if (parts[c].size() == 0) continue;
    auto v = ExtensionEvaluator(S, parts[c]).eval(points);
    for (std::size_t i = 0; i < points.size(); ++i) out.tau[i][c] = std::abs(v[i]);
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    double a = std::abs(ef[i]);
    double mx = *std::max_element(out.tau[i].begin(), out.tau[i].end());
    bool broad = mx < beta * a;
    out.ef.push_back(a);
    out.max_tau.push_back(mx);
    out.is_broad.push_back(broad ? 1 : 0);
    out.broad.push_back(broad ? a : 0.0);
  }
  return out;
}

// Largest relative violation of |Ef|^p <= Br^p + beta^{-p} sum_tau |E f_tau|^p.
inline double broad_inequality_violation(const BroadResult& B, double beta, double p) {
  double worst = 0.0;
  for (std::size_t i = 0; i < B.ef.size(); ++i) {
    double lhs = std::pow(B.ef[i], p);
    double rhs = std::pow(B.broad[i], p);
    for (double t : B.tau[i]) rhs += std::pow(beta, -p) * std::pow(t, p);
    if (lhs > 0.0) worst = std::max(worst, (lhs - rhs) / lhs);
  }
  return worst;
}

struct TubeRef {
  int set = 0;
  int packet = 0;
};

inline std::vector<Tube> flatten_tubes(const std::vector<WavePacketSet>& sets, std::vector<TubeRef>* refs = nullptr) {
  std::vector<Tube> out;
  if (refs) refs->clear();
  for (std::size_t s = 0; s < sets.size(); ++s)
    for (std::size_t k = 0; k < sets[s].packets.size(); ++k) {
      out.push_back(sets[s].packets[k].tube);
      if (refs) refs->push_back({static_cast<int>(s), static_cast<int>(k)});
    }
  return out;
}

// Nearest cap of the cover containing omega, -1 if none.
inline int owning_cap(const CapCover& cover, const Vec2& omega) {
  int best = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (const auto& c : cover.caps) {
    double d = norm(omega - c.center);
    if (d <= c.radius && d < bd) {
      bd = d;
      best = c.id;
    }
  }
  return best;
}

inline bool caps_non_adjacent(const Cap& a, const Cap& b, double K) {
  return norm(a.center - b.center) - a.radius - b.radius >= 1.0 / K;
}

// f_{tau, j, tang} per tau cap: tangent packets of the theta sets owned by tau.
inline std::vector<AmplitudeFunction> tangent_tau_parts(const SurfaceGraph& S, const std::vector<WavePacketSet>& sets,
                                                        const TubeClassification& C, std::size_t ball,
                                                        const CapCover& tau) {
  if (sets.empty()) throw InvalidArgument("bilinear tangential part needs a packet inventory");
  std::vector<TubeRef> refs;
  auto tubes = flatten_tubes(sets, &refs);
  require(C.cls.size() == tubes.size(), "classification does not match the packet inventory");
  std::vector<std::vector<cplx>> acc(tau.caps.size());
  for (std::size_t t = 0; t < tubes.size(); ++t) {
    require(ball < C.cls[t].size(), "ball index out of range");
    if (C.cls[t][ball] != TubeClass::tangent) continue;
    const auto& set = sets[refs[t].set];
    int o = owning_cap(tau, set.cap_center);
    if (o < 0) throw InvalidArgument("theta cap center is not covered by the tau caps");
    if (acc[o].empty()) acc[o].assign(S.nodes.size(), 0.0);
    const auto& pk = set.packets[refs[t].packet];
    for (std::size_t q = 0; q < set.nodes.size(); ++q) acc[o][set.nodes[q]] += pk.values[q];
  }
  std::vector<AmplitudeFunction> out;
  for (auto& a : acc) out.push_back(a.empty() ? AmplitudeFunction() : AmplitudeFunction(S, std::move(a)));
  return out;
}

// Sum over unordered non-adjacent tau pairs of |E f_{tau1}|^{1/2} |E f_{tau2}|^{1/2}.
inline std::vector<double> bilinear_tangential(const SurfaceGraph& S, const std::vector<WavePacketSet>& sets,
                                               const TubeClassification& C, std::size_t ball, const CapCover& tau,
                                               double K, const std::vector<Vec3>& points) {
  require(K >= 1.0, "bilinear part needs K >= 1");
  auto parts = tangent_tau_parts(S, sets, C, ball, tau);
  std::vector<int> live;
  std::vector<std::vector<double>> vals(parts.size());
  for (std::size_t c = 0; c < parts.size(); ++c) {
    if (parts[c].size() == 0) continue;
    live.push_back(static_cast<int>(c));
    auto v = ExtensionEvaluator(S, parts[c]).eval(points);
    for (auto z : v) vals[c].push_back(std::abs(z));
  }
  std::vector<double> out(points.size(), 0.0);
  for (std::size_t a = 0; a < live.size(); ++a)
    for (std::size_t b = a + 1; b < live.size(); ++b) {
      if (!caps_non_adjacent(tau.caps[live[a]], tau.caps[live[b]], K)) continue;
      for (std::size_t i = 0; i < points.size(); ++i) out[i] += std::sqrt(vals[live[a]][i] * vals[live[b]][i]);
    }
  return out;
}

}  // namespace rlab
