#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "rlab/core.hpp"
#include "rlab/geometry.hpp"
#include "rlab/measures.hpp"
#include "rlab/weights.hpp"

namespace rlab {

struct Norms {
  double l1 = 0.0, l2 = 0.0, linf = 0.0;
};

// Complex amplitude per surface node.
class AmplitudeFunction {
 public:
  AmplitudeFunction() = default;
  AmplitudeFunction(const SurfaceGraph& S, std::vector<cplx> values) : values_(std::move(values)) {
    require(values_.size() == S.nodes.size(), "amplitude size does not match the surface");
    refresh(S);
  }

  static AmplitudeFunction zero(const SurfaceGraph& S) { return {S, std::vector<cplx>(S.nodes.size(), 0.0)}; }

  template <class F>
  static AmplitudeFunction from_function(const SurfaceGraph& S, F&& fn) {
    std::vector<cplx> v(S.nodes.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = fn(S.nodes[k].omega);
    return {S, std::move(v)};
  }

  // Independent standard complex Gaussians on the given nodes (all nodes if empty).
  static AmplitudeFunction gaussian(const SurfaceGraph& S, std::uint64_t seed, const std::vector<int>& nodes = {}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, std::sqrt(0.5));
    std::vector<cplx> v(S.nodes.size(), 0.0);
    if (nodes.empty()) {
      for (auto& z : v) z = {N(rng), N(rng)};
    } else {
      for (int k : nodes) v[k] = {N(rng), N(rng)};
    }
    return {S, std::move(v)};
  }

  // Random trigonometric polynomial sum_k g_k e^{pi i k.omega} / (1 + |k|^2) with
  // |k_i| <= modes and complex Gaussian g_k: a smooth stand-in for a random L^2 function.
  static AmplitudeFunction random_smooth(const SurfaceGraph& S, std::uint64_t seed, int modes = 3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, std::sqrt(0.5));
    std::vector<std::pair<Vec2, cplx>> terms;
    for (int a = -modes; a <= modes; ++a)
      for (int b = -modes; b <= modes; ++b) {
        double decay = 1.0 / (1.0 + a * a + b * b);
        terms.push_back({{0.5 * a, 0.5 * b}, cplx(N(rng), N(rng)) * decay});
      }
    return from_function(S, [&](const Vec2& w) {
      cplx s = 0.0;
      for (const auto& [k, g] : terms) s += g * expi2pi(dot(k, w));
      return s;
    });
  }

  void refresh(const SurfaceGraph& S) {
    support_.assign(values_.size(), 0);
    norms_ = {};
    double l2 = 0.0;
    for (std::size_t k = 0; k < values_.size(); ++k) {
      double a = std::abs(values_[k]);
      if (a != 0.0) support_[k] = 1;
      norms_.l1 += a * S.nodes[k].weight;
      l2 += a * a * S.nodes[k].weight;
      norms_.linf = std::max(norms_.linf, a);
    }
    norms_.l2 = std::sqrt(l2);
  }

  const std::vector<cplx>& values() const { return values_; }
  const std::vector<std::uint8_t>& support() const { return support_; }
  const Norms& norms() const { return norms_; }
  std::size_t size() const { return values_.size(); }
  cplx operator[](std::size_t k) const { return values_[k]; }

  AmplitudeFunction restricted(const SurfaceGraph& S, const std::vector<int>& nodes) const {
    std::vector<cplx> v(values_.size(), 0.0);
    for (int k : nodes) v[k] = values_[k];
    return {S, std::move(v)};
  }
  AmplitudeFunction scaled(const SurfaceGraph& S, cplx a) const {
    std::vector<cplx> v(values_);
    for (auto& z : v) z *= a;
    return {S, std::move(v)};
  }
  friend AmplitudeFunction combine(const SurfaceGraph& S, cplx a, const AmplitudeFunction& f, cplx b,
                                   const AmplitudeFunction& g) {
    require(f.size() == g.size(), "amplitude sizes differ");
    std::vector<cplx> v(f.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = a * f.values_[k] + b * g.values_[k];
    return {S, std::move(v)};
  }

 private:
  std::vector<cplx> values_;
  std::vector<std::uint8_t> support_;
  Norms norms_;
};

// Evaluates Ef(x) = sum_nodes e^{-2 pi i x.xi} f(xi) w. For the paraboloid the
// phase splits as a_i(x1, x3) b_j(x2, x3) and the sum becomes a bilinear form
// over the bounding box of supp f.
class ExtensionEvaluator {
 public:
  ExtensionEvaluator(const SurfaceGraph& S, const AmplitudeFunction& f, bool allow_fast = true) : S_(S) {
    require(f.size() == S.nodes.size(), "amplitude size does not match the surface");
    std::vector<int> idx;
    std::vector<cplx> vals;
    for (std::size_t k = 0; k < S.nodes.size(); ++k)
      if (f[k] != 0.0) {
        idx.push_back(static_cast<int>(k));
        vals.push_back(f[k]);
      }
    init(idx, vals, allow_fast);
  }

  // Sparse input: values on the listed nodes, zero elsewhere.
  ExtensionEvaluator(const SurfaceGraph& S, const std::vector<int>& nodes, const std::vector<cplx>& values,
                     bool allow_fast = true)
      : S_(S) {
    require(nodes.size() == values.size(), "sparse amplitude needs one value per node");
    init(nodes, values, allow_fast);
  }

  bool fast() const { return fast_; }
  std::size_t terms() const { return c_.size(); }

  cplx operator()(const Vec3& x) const { return fast_ ? eval_fast(x) : eval_direct(x); }

  cplx eval_direct(const Vec3& x) const {
    cplx s = 0.0;
    for (std::size_t k = 0; k < c_.size(); ++k) s += c_[k] * std::conj(expi2pi(dot(x, xi_[k])));
    return s;
  }

  std::vector<cplx> eval(const std::vector<Vec3>& pts) const {
    std::vector<cplx> out(pts.size());
    parallel_for(pts.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k) out[k] = (*this)(pts[k]);
    });
    return out;
  }

 private:
  void init(const std::vector<int>& nodes, const std::vector<cplx>& values, bool allow_fast) {
    const SurfaceGraph& S = S_;
    int i0 = S.cells, i1 = -1, j0 = S.cells, j1 = -1;
    for (std::size_t t = 0; t < nodes.size(); ++t) {
      if (values[t] == 0.0) continue;
      const auto& n = S.nodes.at(nodes[t]);
      xi_.push_back(n.xi);
      c_.push_back(values[t] * n.weight);
      i0 = std::min(i0, n.i);
      i1 = std::max(i1, n.i);
      j0 = std::min(j0, n.j);
      j1 = std::max(j1, n.j);
    }
    fast_ = allow_fast && S.h.paraboloid && !c_.empty();
    if (!fast_) return;
    i0_ = i0;
    j0_ = j0;
    ni_ = i1 - i0 + 1;
    nj_ = j1 - j0 + 1;
    cr_.assign(static_cast<std::size_t>(ni_) * nj_, 0.0);
    ci_.assign(cr_.size(), 0.0);
    for (std::size_t t = 0; t < nodes.size(); ++t) {
      if (values[t] == 0.0) continue;
      const auto& n = S.nodes[nodes[t]];
      cplx c = values[t] * n.weight;
      std::size_t at = static_cast<std::size_t>(n.i - i0) * nj_ + (n.j - j0);
      cr_[at] += c.real();
      ci_[at] += c.imag();
    }
  }

  cplx eval_fast(const Vec3& x) const {
    thread_local std::vector<double> br, bi;
    br.resize(nj_);
    bi.resize(nj_);
    for (int j = 0; j < nj_; ++j) {
      double w = S_.coord(j0_ + j);
      cplx b = std::conj(expi2pi(x[1] * w + 0.5 * x[2] * w * w));
      br[j] = b.real();
      bi[j] = b.imag();
    }
    cplx total = 0.0;
    for (int i = 0; i < ni_; ++i) {
      const double* r = &cr_[static_cast<std::size_t>(i) * nj_];
      const double* m = &ci_[static_cast<std::size_t>(i) * nj_];
      double sr0 = 0, si0 = 0, sr1 = 0, si1 = 0;
      int j = 0;
      for (; j + 1 < nj_; j += 2) {
        sr0 += r[j] * br[j] - m[j] * bi[j];
        si0 += r[j] * bi[j] + m[j] * br[j];
        sr1 += r[j + 1] * br[j + 1] - m[j + 1] * bi[j + 1];
        si1 += r[j + 1] * bi[j + 1] + m[j + 1] * br[j + 1];
      }
      for (; j < nj_; ++j) {
        sr0 += r[j] * br[j] - m[j] * bi[j];
        si0 += r[j] * bi[j] + m[j] * br[j];
      }
      cplx row(sr0 + sr1, si0 + si1);
      if (row == 0.0) continue;
      double w = S_.coord(i0_ + i);
      total += row * std::conj(expi2pi(x[0] * w + 0.5 * x[2] * w * w));
    }
    return total;
  }

  const SurfaceGraph& S_;
  std::vector<Vec3> xi_;
  std::vector<cplx> c_;
  bool fast_ = false;
  int i0_ = 0, j0_ = 0, ni_ = 0, nj_ = 0;
  std::vector<double> cr_, ci_;
};

inline std::vector<cplx> extension_eval(const SurfaceGraph& S, const AmplitudeFunction& f, const std::vector<Vec3>& pts) {
  return ExtensionEvaluator(S, f).eval(pts);
}

inline std::vector<cplx> extension_eval_direct(const SurfaceGraph& S, const AmplitudeFunction& f,
                                               const std::vector<Vec3>& pts) {
  return ExtensionEvaluator(S, f, false).eval(pts);
}

// Midpoint lattice of spacing s on B(0, R): cell centers inside the ball.
inline std::vector<Vec3> ball_lattice(double R, double s) {
  std::vector<Vec3> pts;
  int n = static_cast<int>(std::ceil(R / s));
  for (int i = -n; i < n; ++i)
    for (int j = -n; j < n; ++j)
      for (int k = -n; k < n; ++k) {
        Vec3 x{(i + 0.5) * s, (j + 0.5) * s, (k + 0.5) * s};
        if (dot(x, x) <= R * R) pts.push_back(x);
      }
  return pts;
}

struct LpResult {
  double integral = 0.0;  // int_{B_R} |Ef|^p H
  double norm = 0.0;      // integral^{1/p}
  std::size_t points = 0;
};

inline LpResult weighted_lp_norm(const SurfaceGraph& S, const AmplitudeFunction& f, double p, const Weight& H,
                                 double R, double spacing = 0.5) {
  require(p >= 1.0, "weighted_lp_norm needs p >= 1");
  require(R >= 1.0, "weighted_lp_norm needs R >= 1");
  require(spacing > 0.0 && spacing <= 0.5, "spatial spacing must lie in (0, 1/2]");
  LpResult out;
  if (H.is_zero()) return out;
  std::vector<Vec3> pts;
  std::vector<double> hv;
  for (const auto& x : ball_lattice(R, spacing)) {
    double h = H.cell_average(x, spacing);
    if (h > 0.0) {
      pts.push_back(x);
      hv.push_back(h);
    }
  }
  out.points = pts.size();
  ExtensionEvaluator E(S, f);
  std::vector<double> contrib(pts.size());
  parallel_for(pts.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) contrib[k] = std::pow(std::abs(E(pts[k])), p) * hv[k];
  });
  double vol = spacing * spacing * spacing;
  for (double c : contrib) out.integral += c;
  out.integral *= vol;
  out.norm = std::pow(out.integral, 1.0 / p);
  return out;
}

// Rescales the node values so every cap B(xi0, R^{-1/2}) carries L^2 mass at
// most R^{-(b+1)/2}: a global factor puts the median cap at the bound, then
// violating caps are shrunk in a fixed order. Shrinking never creates new
// violations, so one pass suffices.
inline AmplitudeFunction lambda_class_normalize(const SurfaceGraph& S, const AmplitudeFunction& f, double R, double b) {
  require(R >= 1.0 && b >= 1.0, "Lambda class needs R >= 1 and b >= 1");
  const double r = 1.0 / std::sqrt(R), bound = std::pow(R, -(b + 1.0) / 2.0);
  std::vector<cplx> v = f.values();
  std::vector<std::vector<int>> caps;
  int n = static_cast<int>(std::ceil(2.0 / (0.5 * r))) + 1;
  for (int a = -n; a <= n; ++a)
    for (int c = -n; c <= n; ++c) {
      Vec2 ctr{a * 0.5 * r, c * 0.5 * r};
      if (norm(ctr) > 1.0 + r) continue;
      auto idx = nodes_in_disc(S, ctr, r);
      if (!idx.empty()) caps.push_back(std::move(idx));
    }
  auto mass = [&](const std::vector<int>& idx) {
    double m = 0.0;
    for (int k : idx) m += std::norm(v[k]) * S.nodes[k].weight;
    return m;
  };
  std::vector<double> ms;
  for (const auto& c : caps) ms.push_back(mass(c));
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  double med = sorted.empty() ? 0.0 : sorted[sorted.size() / 2];
  if (med > 0.0) {
    double g = std::sqrt(bound / med);
    for (auto& z : v) z *= g;
  }
  for (const auto& c : caps) {
    double m = mass(c);
    if (m > bound) {
      double g = std::sqrt(bound / m) * (1.0 - 1e-12);
      for (int k : c) v[k] *= g;
    }
  }
  return {S, std::move(v)};
}

// Largest cap mass over the lattice of cap centers used above.
inline double max_cap_mass(const SurfaceGraph& S, const AmplitudeFunction& f, double R) {
  const double r = 1.0 / std::sqrt(R);
  double best = 0.0;
  int n = static_cast<int>(std::ceil(2.0 / (0.5 * r))) + 1;
  for (int a = -n; a <= n; ++a)
    for (int c = -n; c <= n; ++c) {
      Vec2 ctr{a * 0.5 * r, c * 0.5 * r};
      if (norm(ctr) > 1.0 + r) continue;
      double m = 0.0;
      for (int k : nodes_in_disc(S, ctr, r)) m += std::norm(f[k]) * S.nodes[k].weight;
      best = std::max(best, m);
    }
  return best;
}

// Spatial sample of a function for the dual operator.
struct SpatialGrid {
  std::vector<Vec3> points;
  std::vector<cplx> values;
  double cell_volume = 1.0;
};

// Rf(xi) = sum_grid e^{-2 pi i xi.x} f(x) H(x) dV at each node.
inline AmplitudeFunction restriction_eval(const SurfaceGraph& S, const SpatialGrid& g, const Weight& H) {
  require(g.points.size() == g.values.size(), "spatial grid values do not match its points");
  std::vector<cplx> c(g.points.size());
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = g.values[k] * H.value(g.points[k]) * g.cell_volume;
  std::vector<cplx> out(S.nodes.size());
  parallel_for(S.nodes.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t n = b; n < e; ++n) {
      cplx s = 0.0;
      for (std::size_t k = 0; k < c.size(); ++k)
        if (c[k] != 0.0) s += c[k] * std::conj(expi2pi(dot(S.nodes[n].xi, g.points[k])));
      out[n] = s;
    }
  });
  return {S, std::move(out)};
}

// ||mu^(R .)||_{L^q(S)}
inline double spherical_means(const SurfaceGraph& S, const FractalMeasure& mu, double R, double q) {
  require(q >= 1.0, "spherical means need q >= 1");
  require(R >= 1.0, "spherical means need R >= 1");
  std::vector<double> vals(S.nodes.size());
  if (mu.factors) {
    // Factor transforms along the first two axes depend on one grid index each.
    std::vector<cplx> f0(S.cells), f1(S.cells);
    for (int i = 0; i < S.cells; ++i) {
      f0[i] = (*mu.factors)[0].transform(R * S.coord(i));
      f1[i] = (*mu.factors)[1].transform(R * S.coord(i));
    }
    parallel_for(S.nodes.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k) {
        const auto& n = S.nodes[k];
        vals[k] = std::abs(f0[n.i] * f1[n.j] * (*mu.factors)[2].transform(R * n.xi[2]));
      }
    });
  } else {
    parallel_for(S.nodes.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k) vals[k] = std::abs(mu.transform_direct(R * S.nodes[k].xi));
    });
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < vals.size(); ++k) acc += std::pow(vals[k], q) * S.nodes[k].weight;
  return std::pow(acc, 1.0 / q);
}

struct FrequencySet {
  double R = 0.0;
  std::vector<Vec3> w;
  std::vector<std::array<int, 2>> lattice;  // w = (i/R, j/R, h) when set
  bool on_lattice = false;
  bool paraboloid = false;
};

// Surface points over the lattice (1/R) Z^2 in the unit disc. Parameter distance
// >= 1/R implies surface distance >= 1/R.
inline FrequencySet r_separated_caps(const HeightSpec& h, double R) {
  require(R >= 4.0, "separated frequency set needs R >= 4");
  FrequencySet F;
  F.R = R;
  F.on_lattice = true;
  F.paraboloid = h.paraboloid;
  int n = static_cast<int>(std::floor(R));
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j) {
      Vec2 w{i / R, j / R};
      if (dot(w, w) > 1.0) continue;
      F.w.push_back({w[0], w[1], h.value(w)});
      F.lattice.push_back({i, j});
    }
  return F;
}

// Reports the first pair closer than 1/R using a bucket grid.
inline void validate_separation(const std::vector<Vec3>& w, double R) {
  const double d = 1.0 / R;
  std::unordered_map<long long, std::vector<int>> grid;
  auto key = [&](int a, int b, int c) { return (static_cast<long long>(a) * 100003LL + b) * 100003LL + c; };
  auto cell = [&](double t) { return static_cast<int>(std::floor(t / d)); };
  for (std::size_t k = 0; k < w.size(); ++k) grid[key(cell(w[k][0]), cell(w[k][1]), cell(w[k][2]))].push_back(static_cast<int>(k));
  for (std::size_t k = 0; k < w.size(); ++k) {
    int a = cell(w[k][0]), b = cell(w[k][1]), c = cell(w[k][2]);
    for (int da = -1; da <= 1; ++da)
      for (int db = -1; db <= 1; ++db)
        for (int dc = -1; dc <= 1; ++dc) {
          auto it = grid.find(key(a + da, b + db, c + dc));
          if (it == grid.end()) continue;
          for (int m : it->second) {
            if (m <= static_cast<int>(k)) continue;
            double dist = norm(w[k] - w[m]);
            if (dist < d * (1.0 - 1e-12)) {
              std::ostringstream os;
              os << "frequencies " << k << " and " << m << " are " << dist << " apart, below 1/R = " << d;
              throw InvalidArgument(os.str());
            }
          }
        }
  }
}

// sum_atoms m |sum_l a_l e^{2 pi i R w_l . x}|^p
inline double exponential_sum_eval(const FrequencySet& F, const std::vector<cplx>& a, const FractalMeasure& mu, double p,
                                   bool allow_fast = true) {
  require(a.size() == F.w.size(), "coefficient count does not match the frequency set");
  require(mu.unit_ball, "exponential sums need a measure supported in the unit ball");
  require(p >= 1.0, "exponent p must be >= 1");
  validate_separation(F.w, F.R);
  const double R = F.R;
  bool uniform = !a.empty() && std::all_of(a.begin(), a.end(), [&](cplx z) { return z == a[0]; });
  bool fast = allow_fast && F.on_lattice && F.paraboloid && uniform;
  std::vector<double> out(mu.atoms.size());
  if (fast) {
    // R w.x = i x1 + j x2 + (i^2 + j^2) x3 / (2R); rows are contiguous j-ranges.
    int n = 0;
    std::map<int, std::pair<int, int>> rows;
    for (const auto& ij : F.lattice) {
      n = std::max({n, std::abs(ij[0]), std::abs(ij[1])});
      auto it = rows.find(ij[0]);
      if (it == rows.end())
        rows[ij[0]] = {ij[1], ij[1]};
      else
        it->second = {std::min(it->second.first, ij[1]), std::max(it->second.second, ij[1])};
    }
    parallel_for(mu.atoms.size(), [&](std::size_t b, std::size_t e) {
      std::vector<cplx> pref(2 * n + 2);
      for (std::size_t k = b; k < e; ++k) {
        const Vec3& x = mu.atoms[k].x;
        pref[0] = 0.0;
        for (int j = -n; j <= n; ++j) pref[j + n + 1] = pref[j + n] + expi2pi(j * x[1] + 0.5 * j * j * x[2] / R);
        cplx s = 0.0;
        for (const auto& [i, range] : rows)
          s += expi2pi(i * x[0] + 0.5 * i * i * x[2] / R) * (pref[range.second + n + 1] - pref[range.first + n]);
        out[k] = mu.atoms[k].m * std::pow(std::abs(a[0] * s), p);
      }
    });
  } else {
    parallel_for(mu.atoms.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k) {
        cplx s = 0.0;
        for (std::size_t l = 0; l < F.w.size(); ++l) s += a[l] * expi2pi(R * dot(F.w[l], mu.atoms[k].x));
        out[k] = mu.atoms[k].m * std::pow(std::abs(s), p);
      }
    });
  }
  double total = 0.0;
  for (double v : out) total += v;
  return total;
}

}  // namespace rlab
