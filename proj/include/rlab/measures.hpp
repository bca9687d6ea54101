#pragma once

#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rlab/core.hpp"
#include "rlab/weights.hpp"

namespace rlab {

struct Atom {
  Vec3 x;
  double m;
};

// One-dimensional atomic measure, used as a factor of a product measure.
struct LineMeasure {
  std::vector<double> pos, mass;
  // Self-similar two-piece construction: nu^ = prod_k (1 + e^{-2 pi i t J_k}) / 2.
  std::vector<double> jumps;
  cplx transform(double t) const {
    if (!jumps.empty()) {
      cplx p = 1.0;
      for (double J : jumps) p *= 0.5 * (1.0 + std::conj(expi2pi(t * J)));
      return p;
    }
    return transform_direct(t);
  }
  cplx transform_direct(double t) const {
    cplx s = 0.0;
    for (std::size_t k = 0; k < pos.size(); ++k) s += mass[k] * std::conj(expi2pi(t * pos[k]));
    return s;
  }
};

struct FractalMeasure {
  std::string name;
  std::vector<Atom> atoms;
  double target_dimension = 0.0;
  int level = 0;
  double support_radius = 0.0;  // max |x| over atoms
  double atom_scale = 0.0;      // finest construction scale
  double total_mass = 0.0;
  bool unit_ball = false;
  std::optional<std::array<LineMeasure, 3>> factors;  // set for product measures

  // mu^(eta) = sum m e^{-2 pi i eta . x}
  cplx transform(const Vec3& eta) const {
    if (factors) return (*factors)[0].transform(eta[0]) * (*factors)[1].transform(eta[1]) * (*factors)[2].transform(eta[2]);
    cplx s = 0.0;
    for (const auto& a : atoms) s += a.m * std::conj(expi2pi(dot(eta, a.x)));
    return s;
  }
  cplx transform_direct(const Vec3& eta) const {
    cplx s = 0.0;
    for (const auto& a : atoms) s += a.m * std::conj(expi2pi(dot(eta, a.x)));
    return s;
  }
};

inline void finalize_measure(FractalMeasure& mu) {
  mu.total_mass = 0.0;
  mu.support_radius = 0.0;
  for (const auto& a : mu.atoms) {
    require(a.m > 0.0, "atom masses must be positive");
    mu.total_mass += a.m;
    mu.support_radius = std::max(mu.support_radius, norm(a.x));
  }
  mu.unit_ball = mu.support_radius <= 1.0 + 1e-12;
}

inline FractalMeasure measure_from_atoms(std::vector<Atom> atoms, double alpha, std::string name = "atoms",
                                         double atom_scale = 0.0) {
  FractalMeasure mu;
  mu.name = std::move(name);
  mu.atoms = std::move(atoms);
  mu.target_dimension = alpha;
  mu.atom_scale = atom_scale;
  finalize_measure(mu);
  return mu;
}

inline constexpr int max_materialized_level = 8;

// Product of three copies of the two-piece Cantor measure with ratio 2^{-3/alpha}
// on [0, s], s = 1/sqrt(3), so the support sits in the unit ball with the
// origin as an atom.
inline FractalMeasure cantor_product_measure(double alpha, int level) {
  require(alpha > 0.0 && alpha <= 3.0, "cantor measure dimension must lie in (0, 3]");
  require(level >= 0 && level <= 12, "cantor construction level must lie in [0, 12]");
  if (level > max_materialized_level)
    throw ResourceError("cantor level " + std::to_string(level) + " needs 8^" + std::to_string(level) +
                        " atoms; at most level " + std::to_string(max_materialized_level) + " is materialized");
  const double s = 1.0 / std::sqrt(3.0);
  const double rho = std::pow(2.0, -3.0 / alpha);
  LineMeasure line;
  line.pos = {0.0};
  line.mass = {1.0};
  double scale = s;
  std::vector<double> jumps;
  for (int k = 0; k < level; ++k) {
    std::vector<double> p, q;
    double jump = scale * (1.0 - rho);
    jumps.push_back(jump);
    for (std::size_t a = 0; a < line.pos.size(); ++a) {
      p.push_back(line.pos[a]);
      q.push_back(0.5 * line.mass[a]);
    }
    for (std::size_t a = 0; a < line.pos.size(); ++a) {
      p.push_back(line.pos[a] + jump);
      q.push_back(0.5 * line.mass[a]);
    }
    line.pos = std::move(p);
    line.mass = std::move(q);
    scale *= rho;
  }
  std::vector<std::size_t> order(line.pos.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return line.pos[a] < line.pos[b]; });
  LineMeasure sorted;
  for (auto o : order) {
    sorted.pos.push_back(line.pos[o]);
    sorted.mass.push_back(line.mass[o]);
  }
  sorted.jumps = jumps;
  FractalMeasure mu;
  mu.name = "cantor";
  mu.target_dimension = alpha;
  mu.level = level;
  mu.atom_scale = level == 0 ? s : s * std::pow(rho, level - 1) * (1.0 - rho);
  const std::size_t n = sorted.pos.size();
  mu.atoms.reserve(n * n * n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c)
        mu.atoms.push_back({{sorted.pos[a], sorted.pos[b], sorted.pos[c]}, sorted.mass[a] * sorted.mass[b] * sorted.mass[c]});
  mu.factors = std::array<LineMeasure, 3>{sorted, sorted, sorted};
  finalize_measure(mu);
  return mu;
}

// Atoms of the lattice spacing * Z^3 inside B(center, radius), equal masses summing to mass.
inline FractalMeasure lattice_cluster(const Vec3& center, double radius, double spacing, double mass = 1.0) {
  require(radius > 0.0 && spacing > 0.0, "cluster radius and spacing must be positive");
  std::vector<Atom> atoms;
  int n = static_cast<int>(std::floor(radius / spacing));
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j)
      for (int k = -n; k <= n; ++k) {
        Vec3 d{i * spacing, j * spacing, k * spacing};
        if (norm(d) <= radius) atoms.push_back({center + d, 1.0});
      }
  for (auto& a : atoms) a.m = mass / atoms.size();
  return measure_from_atoms(std::move(atoms), 3.0, "cluster", spacing);
}

// kd-tree with subtree masses for ball-mass queries.
class MassTree {
 public:
  explicit MassTree(const std::vector<Atom>& atoms) : atoms_(atoms) {
    idx_.resize(atoms_.size());
    std::iota(idx_.begin(), idx_.end(), 0);
    if (!atoms_.empty()) build(0, idx_.size(), 0);
  }

  double ball_mass(const Vec3& c, double r) const {
    if (nodes_.empty()) return 0.0;
    return query(0, c, r * r);
  }

 private:
  struct Node {
    Vec3 lo, hi;
    double mass;
    std::size_t b, e;
    int left = -1, right = -1;
  };

  int build(std::size_t b, std::size_t e, int depth) {
    Node nd;
    nd.b = b;
    nd.e = e;
    nd.lo = {1e300, 1e300, 1e300};
    nd.hi = {-1e300, -1e300, -1e300};
    nd.mass = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      const auto& a = atoms_[idx_[k]];
      for (int d = 0; d < 3; ++d) {
        nd.lo[d] = std::min(nd.lo[d], a.x[d]);
        nd.hi[d] = std::max(nd.hi[d], a.x[d]);
      }
      nd.mass += a.m;
    }
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(nd);
    if (e - b > 16) {
      int axis = 0;
      for (int d = 1; d < 3; ++d)
        if (nd.hi[d] - nd.lo[d] > nd.hi[axis] - nd.lo[axis]) axis = d;
      std::size_t mid = (b + e) / 2;
      std::nth_element(idx_.begin() + b, idx_.begin() + mid, idx_.begin() + e,
                       [&](std::size_t p, std::size_t q) { return atoms_[p].x[axis] < atoms_[q].x[axis]; });
      int l = build(b, mid, depth + 1);
      int r = build(mid, e, depth + 1);
      nodes_[id].left = l;
      nodes_[id].right = r;
    }
    return id;
  }

  double query(int id, const Vec3& c, double r2) const {
    const Node& nd = nodes_[id];
    double dmin = 0.0, dmax = 0.0;
    for (int d = 0; d < 3; ++d) {
      double lo = nd.lo[d] - c[d], hi = c[d] - nd.hi[d];
      double out = std::max({lo, hi, 0.0});
      dmin += out * out;
      double far = std::max(std::abs(nd.lo[d] - c[d]), std::abs(nd.hi[d] - c[d]));
      dmax += far * far;
    }
    if (dmin > r2) return 0.0;
    if (dmax <= r2) return nd.mass;
    if (nd.left < 0) {
      double s = 0.0;
      for (std::size_t k = nd.b; k < nd.e; ++k) {
        const auto& a = atoms_[idx_[k]];
        Vec3 d = a.x - c;
        if (dot(d, d) <= r2) s += a.m;
      }
      return s;
    }
    return query(nd.left, c, r2) + query(nd.right, c, r2);
  }

  const std::vector<Atom>& atoms_;
  std::vector<std::size_t> idx_;
  std::vector<Node> nodes_;
};

enum class Functional { A_alpha, C_alpha, C_alpha_R, I_alpha };

inline const char* functional_name(Functional f) {
  switch (f) {
    case Functional::A_alpha: return "A_alpha";
    case Functional::C_alpha: return "C_alpha";
    case Functional::C_alpha_R: return "C_alpha_R";
    case Functional::I_alpha: return "I_alpha";
  }
  return "?";
}

struct DimensionReport {
  Functional functional = Functional::A_alpha;
  double alpha = 0.0;
  double value = 0.0;
  double center_spacing = 0.0;
  std::vector<double> radii;
  std::size_t centers_scanned = 0;
  bool is_lower_bound = true;
  Vec3 argmax_center{0, 0, 0};
  double argmax_radius = 0.0;
};

struct AScanOptions {
  double R_max = 32.0;
  double center_spacing = 1.0;
  std::optional<std::pair<Vec3, Vec3>> center_box;  // default: weight support or [-2, 2]^3
  double points_per_radius = 24.0;  // quadrature spacing = R / points_per_radius
};

// Integral of H over B(c, R) by cell averages on a lattice of spacing q.
inline double ball_integral(const Weight& H, const Vec3& c, double R, double q) {
  int n = static_cast<int>(std::ceil(R / q));
  double acc = 0.0, R2 = R * R;
  for (int i = -n; i < n; ++i) {
    double x = (i + 0.5) * q;
    for (int j = -n; j < n; ++j) {
      double y = (j + 0.5) * q;
      if (x * x + y * y > R2) continue;
      for (int k = -n; k < n; ++k) {
        double z = (k + 0.5) * q;
        if (x * x + y * y + z * z > R2) continue;
        acc += H.cell_average({c[0] + x, c[1] + y, c[2] + z}, q);
      }
    }
  }
  return acc * q * q * q;
}

// Lower bound for A_alpha(H) = sup R^{-alpha} int_{B(x0,R)} H over R >= 1.
inline DimensionReport estimate_A_alpha(const Weight& H, double alpha, const AScanOptions& opt = {}) {
  require(alpha > 0.0 && alpha <= 3.0, "alpha must lie in (0, 3]");
  require(opt.R_max >= 1.0, "A_alpha scan needs R_max >= 1");
  require(opt.center_spacing > 0.0 && opt.center_spacing <= 1.0, "center spacing must lie in (0, 1]");
  DimensionReport rep;
  rep.functional = Functional::A_alpha;
  rep.alpha = alpha;
  rep.center_spacing = opt.center_spacing;
  for (double r = 1.0; r < opt.R_max * (1 + 1e-12); r *= 2.0) rep.radii.push_back(r);
  if (rep.radii.back() < opt.R_max * (1 - 1e-12)) rep.radii.push_back(opt.R_max);
  std::pair<Vec3, Vec3> box{{-2, -2, -2}, {2, 2, 2}};
  if (opt.center_box)
    box = *opt.center_box;
  else if (auto sb = H.support_box())
    box = *sb;
  std::vector<Vec3> centers;
  int n[3];
  for (int d = 0; d < 3; ++d) n[d] = static_cast<int>(std::floor((box.second[d] - box.first[d]) / opt.center_spacing + 1e-9)) + 1;
  for (int a = 0; a < n[0]; ++a)
    for (int b = 0; b < n[1]; ++b)
      for (int c = 0; c < n[2]; ++c)
        centers.push_back({box.first[0] + a * opt.center_spacing, box.first[1] + b * opt.center_spacing,
                           box.first[2] + c * opt.center_spacing});
  rep.centers_scanned = centers.size();
  std::vector<double> best(centers.size(), 0.0), best_r(centers.size(), 0.0);
  parallel_for(centers.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k)
      for (double r : rep.radii) {
        double v = ball_integral(H, centers[k], r, r / opt.points_per_radius) / std::pow(r, alpha);
        if (v > best[k]) {
          best[k] = v;
          best_r[k] = r;
        }
      }
  });
  for (std::size_t k = 0; k < centers.size(); ++k)
    if (best[k] > rep.value) {
      rep.value = best[k];
      rep.argmax_center = centers[k];
      rep.argmax_radius = best_r[k];
    }
  return rep;
}

inline std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t max_count) {
  std::vector<std::size_t> out;
  if (n <= max_count) {
    out.resize(n);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  double stride = static_cast<double>(n) / max_count;
  for (std::size_t k = 0; k < max_count; ++k) out.push_back(static_cast<std::size_t>(k * stride));
  return out;
}

inline std::vector<double> dyadic_radii(double r_min, double r_top) {
  std::vector<double> radii;
  for (double r = r_min; ; r *= 2.0) {
    radii.push_back(r);
    if (r >= r_top) break;
  }
  return radii;
}

// Lower bound for sup_{x, r >= r_min} mu(B(x, r)) / r^alpha, centers at atoms.
// r_min defaults to the finest construction scale of the measure.
inline DimensionReport estimate_C_alpha(const FractalMeasure& mu, double alpha, double r_min = 0.0,
                                        std::size_t max_centers = 4096) {
  require(!mu.atoms.empty(), "measure has no atoms");
  require(alpha > 0.0 && alpha <= 3.0, "alpha must lie in (0, 3]");
  if (r_min <= 0.0) r_min = mu.atom_scale;
  require(r_min > 0.0, "C_alpha needs a positive minimal radius");
  DimensionReport rep;
  rep.functional = Functional::C_alpha;
  rep.alpha = alpha;
  rep.radii = dyadic_radii(r_min, 2.0 * std::max(mu.support_radius, r_min));
  MassTree tree(mu.atoms);
  auto centers = subsample_indices(mu.atoms.size(), max_centers);
  rep.centers_scanned = centers.size();
  std::vector<double> best(centers.size(), 0.0), arg(centers.size(), 0.0);
  parallel_for(centers.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k)
      for (double r : rep.radii) {
        double v = tree.ball_mass(mu.atoms[centers[k]].x, r) / std::pow(r, alpha);
        if (v > best[k]) {
          best[k] = v;
          arg[k] = r;
        }
      }
  });
  for (std::size_t k = 0; k < centers.size(); ++k)
    if (best[k] > rep.value) {
      rep.value = best[k];
      rep.argmax_center = mu.atoms[centers[k]].x;
      rep.argmax_radius = arg[k];
    }
  return rep;
}

// Rigorous upper bound for C_{alpha,R}(mu) = sup_{x, r >= 1/R} mu(B(x,r)) / r^alpha:
// any ball B(y, r) charging mu sits inside B(x, 2r) for some atom x.
inline DimensionReport C_alpha_R_upper(const FractalMeasure& mu, double alpha, double R) {
  require(!mu.atoms.empty(), "measure has no atoms");
  require(R >= 1.0, "C_alpha_R needs R >= 1");
  DimensionReport rep;
  rep.functional = Functional::C_alpha_R;
  rep.alpha = alpha;
  rep.is_lower_bound = false;
  rep.radii = dyadic_radii(1.0 / R, 2.0 * std::max(mu.support_radius, 1.0 / R));
  MassTree tree(mu.atoms);
  rep.centers_scanned = mu.atoms.size();
  std::vector<double> best(mu.atoms.size(), 0.0);
  parallel_for(mu.atoms.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k)
      for (std::size_t i = 0; i < rep.radii.size(); ++i) {
        double rk = rep.radii[i];
        double v = tree.ball_mass(mu.atoms[k].x, 4.0 * rk) / std::pow(rk, alpha);
        best[k] = std::max(best[k], v);
      }
  });
  for (double v : best) rep.value = std::max(rep.value, v);
  return rep;
}

namespace detail {

// Distribution of |p_a - p_b| over ordered pairs, merged, including zero.
inline std::vector<std::pair<double, double>> abs_difference_measure(const LineMeasure& L) {
  std::vector<std::pair<double, double>> d;
  d.reserve(L.pos.size() * L.pos.size());
  for (std::size_t a = 0; a < L.pos.size(); ++a)
    for (std::size_t b = 0; b < L.pos.size(); ++b) d.push_back({std::abs(L.pos[a] - L.pos[b]), L.mass[a] * L.mass[b]});
  std::sort(d.begin(), d.end());
  std::vector<std::pair<double, double>> out;
  double scale = 0.0;
  for (double p : L.pos) scale = std::max(scale, std::abs(p));
  double tol = 1e-12 * std::max(scale, 1e-300);
  for (const auto& e : d) {
    if (!out.empty() && e.first - out.back().first <= tol)
      out.back().second += e.second;
    else
      out.push_back(e);
  }
  if (!out.empty() && out.front().first <= tol) out.front().first = 0.0;
  return out;
}

}  // namespace detail

// I_alpha(mu) = sum over ordered pairs x != y of m_x m_y |x - y|^{-alpha}.
inline DimensionReport energy_I_alpha(const FractalMeasure& mu, double alpha) {
  require(alpha > 0.0 && alpha < 3.0, "energy needs alpha in (0, 3)");
  require(mu.atoms.size() >= 2, "energy needs at least two atoms");
  DimensionReport rep;
  rep.functional = Functional::I_alpha;
  rep.alpha = alpha;
  rep.is_lower_bound = false;
  const double e = -0.5 * alpha;
  if (mu.factors) {
    std::array<std::vector<std::pair<double, double>>, 3> D;
    for (int k = 0; k < 3; ++k) {
      const auto& L = (*mu.factors)[k];
      for (std::size_t a = 1; a < L.pos.size(); ++a)
        if (L.pos[a] == L.pos[a - 1]) throw InvalidArgument("coincident atoms in a product factor");
      D[k] = detail::abs_difference_measure(L);
    }
    std::vector<double> partial(D[0].size(), 0.0);
    parallel_for(D[0].size(), [&](std::size_t b, std::size_t end) {
      for (std::size_t i = b; i < end; ++i) {
        double s = 0.0;
        for (const auto& y : D[1]) {
          double t = 0.0;
          double a2 = D[0][i].first * D[0][i].first + y.first * y.first;
          for (const auto& z : D[2]) {
            double r2 = a2 + z.first * z.first;
            if (r2 == 0.0) continue;
            t += z.second * std::pow(r2, e);
          }
          s += y.second * t;
        }
        partial[i] = D[0][i].second * s;
      }
    });
    for (double v : partial) rep.value += v;
    return rep;
  }
  const auto& A = mu.atoms;
  std::vector<double> partial(A.size(), 0.0);
  std::vector<long> clash(A.size(), -1);
  parallel_for(A.size(), [&](std::size_t b, std::size_t end) {
    for (std::size_t i = b; i < end; ++i) {
      double s = 0.0;
      for (std::size_t j = i + 1; j < A.size(); ++j) {
        Vec3 d = A[i].x - A[j].x;
        double r2 = dot(d, d);
        if (r2 == 0.0) {
          clash[i] = static_cast<long>(j);
          break;
        }
        s += A[j].m * std::pow(r2, e);
      }
      partial[i] = 2.0 * A[i].m * s;
    }
  });
  for (std::size_t i = 0; i < A.size(); ++i)
    if (clash[i] >= 0)
      throw InvalidArgument("coincident atoms " + std::to_string(i) + " and " + std::to_string(clash[i]));
  for (double v : partial) rep.value += v;
  return rep;
}

// c_alpha = pi^{alpha - 3/2} Gamma((3 - alpha)/2) / Gamma(alpha/2)
inline double riesz_constant(double alpha) {
  return std::pow(pi, alpha - 1.5) * std::tgamma(0.5 * (3.0 - alpha)) / std::tgamma(0.5 * alpha);
}

struct EnergyComparison {
  double spatial = 0.0;
  double fourier = 0.0;
  double relative_gap = 0.0;
  double cutoff = 0.0;
};

// Spatial energy against c_alpha int_{|eta| < cutoff} (|mu^|^2 - sum m^2) |eta|^{alpha-3}.
// Removing sum m^2 drops the diagonal, matching the spatial pair sum.
inline EnergyComparison energy_fourier_check(const FractalMeasure& mu, double alpha, double cutoff) {
  require(cutoff >= 1.0, "frequency cutoff must be >= 1");
  require(alpha > 0.0 && alpha < 3.0, "energy needs alpha in (0, 3)");
  EnergyComparison out;
  out.cutoff = cutoff;
  if (mu.atoms.empty() || mu.total_mass == 0.0) return out;
  out.spatial = mu.atoms.size() >= 2 ? energy_I_alpha(mu, alpha).value : 0.0;
  double diag = 0.0, diam = 0.0;
  for (const auto& a : mu.atoms) diag += a.m * a.m;
  {
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (const auto& a : mu.atoms)
      for (int d = 0; d < 3; ++d) {
        lo[d] = std::min(lo[d], a.x[d]);
        hi[d] = std::max(hi[d], a.x[d]);
      }
    diam = norm(hi - lo);
  }
  diam = std::max(diam, 1e-3);
  // Radial panels of width ~ 1/diam, 8 Gauss points each; the first panel
  // uses rho = rho1 t^{1/alpha} to absorb rho^{alpha-1}.
  std::vector<double> gx, gw;
  gauss_legendre(8, gx, gw);
  double width = std::min(1.0 / diam, cutoff);
  int panels = static_cast<int>(std::ceil(cutoff / width));
  width = cutoff / panels;
  std::vector<std::pair<double, double>> shells;  // rho, weight for int f(rho) rho^{alpha-1} drho
  for (int p = 0; p < panels; ++p) {
    double a = p * width, b = a + width;
    for (int g = 0; g < 8; ++g) {
      double t = 0.5 * (gx[g] + 1.0);
      if (p == 0) {
        double rho = b * std::pow(t, 1.0 / alpha);
        shells.push_back({rho, 0.5 * gw[g] * std::pow(b, alpha) / alpha});
      } else {
        double rho = a + t * width;
        shells.push_back({rho, 0.5 * gw[g] * width * std::pow(rho, alpha - 1.0)});
      }
    }
  }
  std::vector<double> shell_val(shells.size(), 0.0);
  parallel_for(shells.size(), [&](std::size_t b, std::size_t e) {
    std::vector<double> cx, cw;
    for (std::size_t s = b; s < e; ++s) {
      double rho = shells[s].first;
      int nt = std::max(8, static_cast<int>(std::ceil(pi * rho * diam)) + 8);
      int np = 2 * nt;
      gauss_legendre(nt, cx, cw);
      double acc = 0.0;
      for (int i = 0; i < nt; ++i) {
        double ct = cx[i], st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        double row = 0.0;
        for (int j = 0; j < np; ++j) {
          double ph = two_pi * (j + 0.5) / np;
          Vec3 eta{rho * st * std::cos(ph), rho * st * std::sin(ph), rho * ct};
          row += std::norm(mu.transform(eta)) - diag;
        }
        acc += cw[i] * row * (two_pi / np);
      }
      shell_val[s] = acc;
    }
  });
  double total = 0.0;
  for (std::size_t s = 0; s < shells.size(); ++s) total += shells[s].second * shell_val[s];
  out.fourier = riesz_constant(alpha) * total;
  out.relative_gap = out.spatial != 0.0 ? std::abs(out.fourier - out.spatial) / std::abs(out.spatial) : 0.0;
  return out;
}

struct BumpSpec {
  double support_radius = 0.25;  // phi^ supported in B(0, support_radius) inside B(0, 1)
  double grid_spacing = 0.0;     // default support_radius / 4
};

inline double bump_profile(double r, double radius) {
  double t = r / radius;
  if (t >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - t * t));
}

struct MeasureWeight {
  WeightPtr weight;
  double C_alpha_R = 0.0;  // upper bound used for the normalization
  double phi_min_on_surface = 0.0;
  double phi_rescale = 1.0;
};

// H(y) = C_{alpha,R}(mu)^{-1} R^alpha int |phi^(R x - y)| dmu(x) / ||phi^||_inf, tabulated
// on a lattice. The normalization uses a rigorous upper bound for C_{alpha,R}, so
// H <= 1 holds exactly on the table.
inline MeasureWeight weight_from_measure(const FractalMeasure& mu, double alpha, double R, const BumpSpec& bump = {}) {
  require(R >= 1.0, "weight_from_measure needs R >= 1");
  require(mu.unit_ball, "weight_from_measure needs a measure supported in the unit ball");
  require(bump.support_radius > 0.0 && bump.support_radius <= 1.0, "bump support radius must lie in (0, 1]");
  require(!mu.atoms.empty(), "measure has no atoms");
  MeasureWeight out;
  out.C_alpha_R = C_alpha_R_upper(mu, alpha, R).value;
  if (!(out.C_alpha_R > 0.0)) throw NumericalError("C_{alpha,R} estimate vanished");
  const double rb = bump.support_radius;
  const double q = bump.grid_spacing > 0.0 ? bump.grid_spacing : rb / 4.0;
  Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (const auto& a : mu.atoms)
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], R * a.x[d] - rb);
      hi[d] = std::max(hi[d], R * a.x[d] + rb);
    }
  weight_kind::Gridded g;
  g.spacing = q;
  for (int d = 0; d < 3; ++d) lo[d] = std::floor(lo[d] / q) * q;
  g.origin = lo;
  g.nx = static_cast<int>(std::ceil((hi[0] - lo[0]) / q)) + 1;
  g.ny = static_cast<int>(std::ceil((hi[1] - lo[1]) / q)) + 1;
  g.nz = static_cast<int>(std::ceil((hi[2] - lo[2]) / q)) + 1;
  std::size_t total = static_cast<std::size_t>(g.nx) * g.ny * g.nz;
  if (total > (std::size_t{1} << 27)) throw ResourceError("weight_from_measure grid too large; raise the grid spacing");
  g.values.assign(total, 0.0);
  const double scale = std::pow(R, alpha) / out.C_alpha_R;
  int reach = static_cast<int>(std::ceil(rb / q)) + 1;
  for (const auto& a : mu.atoms) {
    Vec3 c = R * a.x;
    int ci = static_cast<int>(std::floor((c[0] - lo[0]) / q)), cj = static_cast<int>(std::floor((c[1] - lo[1]) / q)),
        ck = static_cast<int>(std::floor((c[2] - lo[2]) / q));
    for (int i = std::max(0, ci - reach); i <= std::min(g.nx - 1, ci + reach); ++i)
      for (int j = std::max(0, cj - reach); j <= std::min(g.ny - 1, cj + reach); ++j)
        for (int k = std::max(0, ck - reach); k <= std::min(g.nz - 1, ck + reach); ++k) {
          Vec3 y{lo[0] + (i + 0.5) * q, lo[1] + (j + 0.5) * q, lo[2] + (k + 0.5) * q};
          double b = bump_profile(norm(c - y), rb);
          if (b > 0.0) g.values[(static_cast<std::size_t>(i) * g.ny + j) * g.nz + k] += scale * a.m * b;
        }
  }
  for (double& v : g.values) v = std::min(v, 1.0);  // guards rounding only; the bound is exact
  // |phi| on the surface for phi the inverse transform of the bump; only the
  // normalization of phi^ is affected, and H is invariant under it.
  {
    std::vector<double> gx, gw;
    gauss_legendre(24, gx, gw);
    auto phi = [&](double k) {  // radial profile at |xi| = k
      double s = 0.0;
      for (int t = 0; t < 24; ++t) {
        double r = 0.5 * rb * (gx[t] + 1.0);
        double kern = k == 0.0 ? 1.0 : std::sin(two_pi * k * r) / (two_pi * k * r);
        s += 0.5 * rb * gw[t] * 4.0 * pi * r * r * bump_profile(r, rb) * kern;
      }
      return s;
    };
    double mn = 1e300;
    for (int t = 0; t <= 64; ++t) mn = std::min(mn, std::abs(phi(std::sqrt(1.25) * t / 64.0)));
    out.phi_min_on_surface = mn;
    out.phi_rescale = mn < 1.0 && mn > 0.0 ? 1.0 / mn : 1.0;
  }
  out.weight = Weight::gridded(std::move(g), alpha, "from_measure");
  return out;
}

struct WolffDecomposition {
  std::vector<FractalMeasure> pieces;  // nonempty buckets, densest first
  std::vector<int> bucket_of_atom;
  std::vector<int> bucket_ids;
  double alpha = 0.0;
  double R = 0.0;
};

// Buckets atoms by maximal local density over dyadic radii in [1/R, 2 support],
// one bucket per factor 2^{alpha+1} below the densest atom.
inline WolffDecomposition wolff_decompose(const FractalMeasure& mu, double alpha, double R) {
  require(!mu.atoms.empty(), "measure has no atoms");
  require(R >= 2.0, "Wolff decomposition needs R >= 2");
  WolffDecomposition out;
  out.alpha = alpha;
  out.R = R;
  auto radii = dyadic_radii(1.0 / R, 2.0 * std::max(mu.support_radius, 1.0 / R));
  MassTree tree(mu.atoms);
  std::vector<double> dens(mu.atoms.size(), 0.0);
  parallel_for(mu.atoms.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k)
      for (double r : radii) dens[k] = std::max(dens[k], tree.ball_mass(mu.atoms[k].x, r) / std::pow(r, alpha));
  });
  double top = *std::max_element(dens.begin(), dens.end());
  double base = std::log(std::pow(2.0, alpha + 1.0));
  std::map<int, std::vector<std::size_t>> groups;
  out.bucket_of_atom.resize(mu.atoms.size());
  for (std::size_t k = 0; k < mu.atoms.size(); ++k) {
    int j = static_cast<int>(std::floor(std::log(top / dens[k]) / base + 1e-12));
    out.bucket_of_atom[k] = j;
    groups[j].push_back(k);
  }
  for (auto& [j, idx] : groups) {
    std::vector<Atom> atoms;
    for (auto k : idx) atoms.push_back(mu.atoms[k]);
    out.pieces.push_back(measure_from_atoms(std::move(atoms), alpha, "wolff_" + std::to_string(j), mu.atom_scale));
    out.bucket_ids.push_back(j);
  }
  return out;
}

}  // namespace rlab
