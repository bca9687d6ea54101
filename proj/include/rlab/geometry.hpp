#pragma once

#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rlab/core.hpp"

namespace rlab {

// Height function h over the closed unit disc. The surface is the graph
// {(w, h(w)) : |w| <= 1}.
struct HeightSpec {
  struct Term {
    int a = 0, b = 0;  // w1^a w2^b
    double c = 0.0;
  };

  std::string name;
  std::vector<Term> terms;  // polynomial form, empty for closure-only specs
  std::function<double(const Vec2&)> value_fn;
  std::function<Vec2(const Vec2&)> grad_fn;
  std::function<std::array<double, 3>(const Vec2&)> hess_fn;  // h11, h12, h22
  bool paraboloid = false;  // exactly |w|^2 / 2
  int smoothness_order = 8;  // metadata only

  double value(const Vec2& w) const {
    if (value_fn) return value_fn(w);
    double s = 0.0;
    for (const auto& t : terms) s += t.c * std::pow(w[0], t.a) * std::pow(w[1], t.b);
    return s;
  }

  Vec2 gradient(const Vec2& w) const {
    if (grad_fn) return grad_fn(w);
    Vec2 g{0.0, 0.0};
    for (const auto& t : terms) {
      if (t.a > 0) g[0] += t.c * t.a * std::pow(w[0], t.a - 1) * std::pow(w[1], t.b);
      if (t.b > 0) g[1] += t.c * t.b * std::pow(w[0], t.a) * std::pow(w[1], t.b - 1);
    }
    return g;
  }

  std::array<double, 3> hessian(const Vec2& w) const {
    if (hess_fn) return hess_fn(w);
    std::array<double, 3> H{0.0, 0.0, 0.0};
    for (const auto& t : terms) {
      if (t.a > 1) H[0] += t.c * t.a * (t.a - 1) * std::pow(w[0], t.a - 2) * std::pow(w[1], t.b);
      if (t.a > 0 && t.b > 0)
        H[1] += t.c * t.a * t.b * std::pow(w[0], t.a - 1) * std::pow(w[1], t.b - 1);
      if (t.b > 1) H[2] += t.c * t.b * (t.b - 1) * std::pow(w[0], t.a) * std::pow(w[1], t.b - 2);
    }
    return H;
  }

  // Area element sqrt(1 + |grad h|^2).
  double jacobian(const Vec2& w) const {
    Vec2 g = gradient(w);
    return std::sqrt(1.0 + g[0] * g[0] + g[1] * g[1]);
  }

  Vec3 normal(const Vec2& w) const {
    Vec2 g = gradient(w);
    double J = std::sqrt(1.0 + g[0] * g[0] + g[1] * g[1]);
    return {-g[0] / J, -g[1] / J, 1.0 / J};
  }

  static HeightSpec paraboloid_spec() {
    HeightSpec h;
    h.name = "paraboloid";
    h.terms = {{2, 0, 0.5}, {0, 2, 0.5}};
    h.paraboloid = true;
    return h;
  }

  static HeightSpec polynomial(std::string name, std::vector<Term> terms) {
    HeightSpec h;
    h.name = std::move(name);
    h.terms = std::move(terms);
    return h;
  }
};

// Hessian eigenvalues of a symmetric 2x2 matrix, ascending.
inline std::pair<double, double> sym2_eigen(const std::array<double, 3>& H) {
  double m = 0.5 * (H[0] + H[2]);
  double d = std::sqrt(0.25 * (H[0] - H[2]) * (H[0] - H[2]) + H[1] * H[1]);
  return {m - d, m + d};
}

// Exact area of the unit disc intersected with [x0, x1] x [y0, y1].
inline double disc_rect_area(double x0, double x1, double y0, double y1) {
  x0 = std::max(x0, -1.0);
  x1 = std::min(x1, 1.0);
  if (x1 <= x0 || y1 <= y0) return 0.0;
  // Antiderivative of sqrt(1 - x^2).
  auto G = [](double x) {
    x = std::clamp(x, -1.0, 1.0);
    return 0.5 * (x * std::sqrt(std::max(0.0, 1.0 - x * x)) + std::asin(x));
  };
  std::vector<double> cuts{x0, x1};
  for (double y : {y0, y1}) {
    if (std::abs(y) < 1.0) {
      double s = std::sqrt(1.0 - y * y);
      for (double c : {-s, s})
        if (c > x0 && c < x1) cuts.push_back(c);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    double a = cuts[k], b = cuts[k + 1];
    if (b <= a) continue;
    double xm = 0.5 * (a + b);
    double s = std::sqrt(std::max(0.0, 1.0 - xm * xm));
    bool top_is_disc = s < y1, bot_is_disc = -s > y0;
    double top = top_is_disc ? s : y1, bot = bot_is_disc ? -s : y0;
    if (top <= bot) continue;
    double seg = 0.0;
    seg += top_is_disc ? (G(b) - G(a)) : y1 * (b - a);
    seg -= bot_is_disc ? -(G(b) - G(a)) : y0 * (b - a);
    area += seg;
  }
  return std::max(0.0, area);
}

struct SurfaceNode {
  Vec2 omega;
  Vec3 xi;
  double weight;    // covered cell area times the area element
  double coverage;  // covered fraction of the cell area
  int i, j;         // parameter grid indices
};

// Quadrature discretization of the surface on a square parameter grid of
// spacing 1 / resolution clipped to the unit disc.
struct SurfaceGraph {
  HeightSpec h;
  int resolution = 0;
  double spacing = 0.0;
  int cells = 0;  // cells per axis, 2 * resolution
  std::vector<SurfaceNode> nodes;
  std::vector<int> lookup;  // cells * cells, -1 where the cell misses the disc

  double area() const {
    double s = 0.0;
    for (const auto& n : nodes) s += n.weight;
    return s;
  }
  double coord(int i) const { return -1.0 + (i + 0.5) * spacing; }
  int node_at(int i, int j) const {
    if (i < 0 || j < 0 || i >= cells || j >= cells) return -1;
    return lookup[static_cast<std::size_t>(i) * cells + j];
  }
  // Index of the cell containing the parameter coordinate t.
  int cell_of(double t) const { return static_cast<int>(std::floor((t + 1.0) / spacing)); }
};

inline SurfaceGraph build_surface(const HeightSpec& h, int resolution) {
  require(resolution >= 8, "surface resolution must be at least 8 nodes per unit length");
  require(resolution <= 8192, "surface resolution exceeds the supported grid size");
  SurfaceGraph S;
  S.h = h;
  S.resolution = resolution;
  S.spacing = 1.0 / resolution;
  S.cells = 2 * resolution;
  S.lookup.assign(static_cast<std::size_t>(S.cells) * S.cells, -1);
  const double hs = S.spacing, cell_area = hs * hs;
  for (int i = 0; i < S.cells; ++i) {
    double x0 = -1.0 + i * hs;
    for (int j = 0; j < S.cells; ++j) {
      double y0 = -1.0 + j * hs;
      double a = disc_rect_area(x0, x0 + hs, y0, y0 + hs);
      if (a <= 1e-14 * cell_area) continue;
      Vec2 w{x0 + 0.5 * hs, y0 + 0.5 * hs};
      auto [emin, emax] = sym2_eigen(h.hessian(w));
      if (!(emin > 0.75 && emax < 1.25)) {
        std::ostringstream os;
        os << "height function '" << h.name << "' has Hessian eigenvalues outside (3/4, 5/4) at w=(" << w[0]
           << ", " << w[1] << "): eigenvalues " << emin << ", " << emax;
        throw InvalidArgument(os.str());
      }
      SurfaceNode n;
      n.omega = w;
      n.xi = {w[0], w[1], h.value(w)};
      n.coverage = a / cell_area;
      n.weight = a * h.jacobian(w);
      n.i = i;
      n.j = j;
      S.lookup[static_cast<std::size_t>(i) * S.cells + j] = static_cast<int>(S.nodes.size());
      S.nodes.push_back(n);
    }
  }
  return S;
}

// Indices of nodes with |w - center| <= radius.
inline std::vector<int> nodes_in_disc(const SurfaceGraph& S, const Vec2& center, double radius) {
  std::vector<int> out;
  int i0 = std::max(0, S.cell_of(center[0] - radius)), i1 = std::min(S.cells - 1, S.cell_of(center[0] + radius));
  int j0 = std::max(0, S.cell_of(center[1] - radius)), j1 = std::min(S.cells - 1, S.cell_of(center[1] + radius));
  double r2 = radius * radius * (1.0 + 1e-12);
  for (int i = i0; i <= i1; ++i)
    for (int j = j0; j <= j1; ++j) {
      int k = S.node_at(i, j);
      if (k < 0) continue;
      Vec2 d = S.nodes[k].omega - center;
      if (dot(d, d) <= r2) out.push_back(k);
    }
  return out;
}

inline Vec3 cap_normal(const HeightSpec& h, const Vec2& w0) {
  require(norm(w0) <= 1.0 + 1e-12, "cap center must lie in the closed unit disc");
  return h.normal(w0);
}

struct Cap {
  int id = 0;
  Vec2 center;
  double radius = 0.0;
  Vec3 normal;
  std::vector<int> nodes;
};

enum class CapScale { theta, tau };

struct CapCover {
  CapScale scale = CapScale::theta;
  double scale_parameter = 0.0;  // R for theta caps, K for tau caps
  int m = 1;
  double radius = 0.0;
  double separation = 0.0;  // lattice spacing of the centers
  double multiplicity_constant = 0.0;  // c in multiplicity <= c m
  int measured_multiplicity = 0;
  std::vector<Cap> caps;
  std::vector<int> owner;  // per surface node: nearest containing cap, -1 if uncovered
};

// Largest number of points of a square lattice with unit spacing inside a closed
// disc of radius sqrt(m), divided by m, rounded up. Bounds the multiplicity.
inline double lattice_multiplicity_constant(int m) {
  double r = std::sqrt(static_cast<double>(m)) + std::sqrt(0.5);
  return std::ceil(pi * r * r / m);
}

// theta scale: radius R^{-1/2}, centers on a lattice of that spacing.
// tau scale: radius sqrt(m)/K, centers 1/K-separated.
inline CapCover cap_cover(const SurfaceGraph& S, CapScale scale, double param, int m = 1) {
  CapCover cov;
  cov.scale = scale;
  cov.scale_parameter = param;
  cov.m = m;
  require(m >= 1, "cap multiplicity parameter m must be >= 1");
  if (scale == CapScale::theta) {
    require(param > 1.0, "theta caps need R > 1");
    cov.radius = 1.0 / std::sqrt(param);
    cov.separation = cov.radius;
    if (cov.radius > 1.0 / 12.0 + 1e-15)
      throw InvalidArgument("theta cap radius R^{-1/2} = " + std::to_string(cov.radius) +
                            " exceeds 1/12; use R >= 144");
  } else {
    require(param >= 1.0, "tau caps need K >= 1");
    cov.separation = 1.0 / param;
    cov.radius = std::sqrt(static_cast<double>(m)) / param;
    if (cov.radius > 0.5 + 1e-15)
      throw InvalidArgument("tau cap radius sqrt(m)/K = " + std::to_string(cov.radius) +
                            " is too large for the separation constraint (must be <= 1/2)");
  }
  cov.multiplicity_constant = lattice_multiplicity_constant(m);
  const double s = cov.separation;
  // Boundary cell centers may sit up to spacing/sqrt(2) outside the disc.
  const double reach = 1.0 + S.spacing + cov.radius;
  int n = static_cast<int>(std::ceil(reach / s)) + 1;
  std::vector<int> count(S.nodes.size(), 0);
  cov.owner.assign(S.nodes.size(), -1);
  std::vector<double> best(S.nodes.size(), 1e300);
  for (int a = -n; a < n; ++a)
    for (int b = -n; b < n; ++b) {
      Vec2 c{(a + 0.5) * s, (b + 0.5) * s};
      if (norm(c) > reach) continue;
      auto idx = nodes_in_disc(S, c, cov.radius);
      if (idx.empty()) continue;
      Cap cap;
      cap.id = static_cast<int>(cov.caps.size());
      cap.center = c;
      cap.radius = cov.radius;
      Vec2 cn = norm(c) <= 1.0 ? c : (1.0 / norm(c)) * c;
      cap.normal = S.h.normal(cn);
      for (int k : idx) {
        ++count[k];
        Vec2 d = S.nodes[k].omega - c;
        double dd = dot(d, d);
        if (dd < best[k]) {
          best[k] = dd;
          cov.owner[k] = cap.id;
        }
      }
      cap.nodes = std::move(idx);
      cov.caps.push_back(std::move(cap));
    }
  for (std::size_t k = 0; k < count.size(); ++k) {
    if (count[k] == 0) throw NumericalError("cap cover leaves a surface node uncovered");
    cov.measured_multiplicity = std::max(cov.measured_multiplicity, count[k]);
  }
  return cov;
}

}  // namespace rlab
