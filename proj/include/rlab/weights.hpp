#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rlab/core.hpp"

namespace rlab {

class Weight;
using WeightPtr = std::shared_ptr<const Weight>;

namespace weight_kind {

struct Constant {
  double c = 1.0;
};
// |x3| <= |(x1, x2)|^{-1/2}
struct Omega1 {};
// |x3| <= 1
struct Omega2 {};
// Union of R x [-1,1]^2 + (0, sgn m |m|^{1/a}, sgn n |n|^{1/b}).
struct OmegaAB {
  double a = 0.0, b = 0.0;
};
// Piecewise constant on the cells of a lattice, zero outside.
struct Gridded {
  Vec3 origin;  // corner of cell (0,0,0)
  double spacing = 1.0;
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> values;
  double at(int i, int j, int k) const { return values[(static_cast<std::size_t>(i) * ny + j) * nz + k]; }
};
// x -> base(Tinv x)
struct Transformed {
  WeightPtr base;
  std::array<double, 9> Tinv;
};
// x -> base(x + shift)
struct Translated {
  WeightPtr base;
  Vec3 shift;
};

}  // namespace weight_kind

using WeightVariant = std::variant<weight_kind::Constant, weight_kind::Omega1, weight_kind::Omega2,
                                   weight_kind::OmegaAB, weight_kind::Gridded, weight_kind::Transformed,
                                   weight_kind::Translated>;

namespace detail {

// Offsets sgn m |m|^{1/a}; a = 0 means the single offset 0.
inline double omega_offset(long m, double a) {
  if (m == 0) return 0.0;
  double t = std::pow(static_cast<double>(std::labs(m)), 1.0 / a);
  return m > 0 ? t : -t;
}

// Closest index m whose offset is near t.
inline long omega_index_near(double t, double a) {
  double v = std::pow(std::abs(t), a);
  long m = static_cast<long>(std::llround(v));
  return t >= 0 ? m : -m;
}

// Length of [lo, hi] covered by the union of [t_m - 1, t_m + 1].
inline double omega_cover_length(double lo, double hi, double a) {
  if (hi <= lo) return 0.0;
  if (a == 0.0) return std::max(0.0, std::min(hi, 1.0) - std::max(lo, -1.0));
  long m0 = omega_index_near(lo - 1.0, a) - 1, m1 = omega_index_near(hi + 1.0, a) + 1;
  double covered = 0.0, reach = lo;
  for (long m = m0; m <= m1; ++m) {
    double t = omega_offset(m, a);
    double s = std::max(t - 1.0, reach), e = std::min(t + 1.0, hi);
    if (e > s) {
      covered += e - s;
      reach = e;
    }
  }
  return covered;
}

inline bool omega_hits(double x, double a) {
  if (a == 0.0) return std::abs(x) <= 1.0;
  long m = omega_index_near(x, a);
  for (long d = -2; d <= 2; ++d)
    if (std::abs(x - omega_offset(m + d, a)) <= 1.0) return true;
  return false;
}

// Fraction of [c - s/2, c + s/2] with |x| <= L.
inline double slab_fraction(double c, double s, double L) {
  double lo = c - 0.5 * s, hi = c + 0.5 * s;
  return std::max(0.0, std::min(hi, L) - std::max(lo, -L)) / s;
}

}  // namespace detail

class Weight {
 public:
  Weight(WeightVariant v, double claimed_dimension, std::string name)
      : v_(std::move(v)), alpha_(claimed_dimension), name_(std::move(name)) {
    require(alpha_ > 0.0 && alpha_ <= 3.0, "claimed dimension must lie in (0, 3]");
  }

  static WeightPtr constant(double c, double alpha = 3.0) {
    require(c >= 0.0 && c <= 1.0, "constant weight must lie in [0, 1]");
    return std::make_shared<Weight>(weight_kind::Constant{c}, alpha, c == 0.0 ? "zero" : "constant");
  }
  static WeightPtr omega1() { return std::make_shared<Weight>(weight_kind::Omega1{}, 1.5, "omega1"); }
  static WeightPtr omega2() { return std::make_shared<Weight>(weight_kind::Omega2{}, 2.0, "omega2"); }
  static WeightPtr omega_ab(double a, double b) {
    require(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0, "omega_ab needs a, b in [0, 1]");
    require(a > 0.0 || b > 0.0, "omega_ab with a = b = 0 is not defined");
    return std::make_shared<Weight>(weight_kind::OmegaAB{a, b}, 1.0 + a + b, "omega_ab");
  }
  static WeightPtr gridded(weight_kind::Gridded g, double alpha, std::string name = "gridded") {
    require(g.nx > 0 && g.ny > 0 && g.nz > 0 && g.spacing > 0.0, "gridded weight needs a nonempty lattice");
    require(g.values.size() == static_cast<std::size_t>(g.nx) * g.ny * g.nz, "gridded weight size mismatch");
    for (double v : g.values) require(v >= 0.0 && v <= 1.0 + 1e-12, "gridded weight values must lie in [0, 1]");
    return std::make_shared<Weight>(std::move(g), alpha, std::move(name));
  }
  static WeightPtr transformed(WeightPtr base, const std::array<double, 9>& Tinv, double alpha) {
    return std::make_shared<Weight>(weight_kind::Transformed{std::move(base), Tinv}, alpha, "pushforward");
  }
  static WeightPtr translated(WeightPtr base, const Vec3& shift) {
    double a = base->claimed_dimension();
    return std::make_shared<Weight>(weight_kind::Translated{std::move(base), shift}, a, "translate");
  }

  double claimed_dimension() const { return alpha_; }
  const std::string& name() const { return name_; }
  const WeightVariant& variant() const { return v_; }
  bool is_zero() const {
    auto* c = std::get_if<weight_kind::Constant>(&v_);
    return c && c->c == 0.0;
  }

  double value(const Vec3& x) const {
    using namespace weight_kind;
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Constant>) {
            return k.c;
          } else if constexpr (std::is_same_v<K, Omega1>) {
            double rho = std::hypot(x[0], x[1]);
            if (rho == 0.0) return 1.0;
            return std::abs(x[2]) <= 1.0 / std::sqrt(rho) ? 1.0 : 0.0;
          } else if constexpr (std::is_same_v<K, Omega2>) {
            return std::abs(x[2]) <= 1.0 ? 1.0 : 0.0;
          } else if constexpr (std::is_same_v<K, OmegaAB>) {
            return detail::omega_hits(x[1], k.a) && detail::omega_hits(x[2], k.b) ? 1.0 : 0.0;
          } else if constexpr (std::is_same_v<K, Gridded>) {
            double fi = (x[0] - k.origin[0]) / k.spacing, fj = (x[1] - k.origin[1]) / k.spacing,
                   fk = (x[2] - k.origin[2]) / k.spacing;
            if (fi < 0 || fj < 0 || fk < 0) return 0.0;
            int i = static_cast<int>(fi), j = static_cast<int>(fj), l = static_cast<int>(fk);
            if (i >= k.nx || j >= k.ny || l >= k.nz) return 0.0;
            return k.at(i, j, l);
          } else if constexpr (std::is_same_v<K, Transformed>) {
            const auto& M = k.Tinv;
            Vec3 y{M[0] * x[0] + M[1] * x[1] + M[2] * x[2], M[3] * x[0] + M[4] * x[1] + M[5] * x[2],
                   M[6] * x[0] + M[7] * x[1] + M[8] * x[2]};
            return k.base->value(y);
          } else {
            return k.base->value(x + k.shift);
          }
        },
        v_);
  }

  // Average of H over the cube of side s centered at c. Exact in x3 for the
  // slab-type weights; sub-sampled midpoint rule otherwise.
  double cell_average(const Vec3& c, double s, int sub = 4) const {
    using namespace weight_kind;
    if (auto* k = std::get_if<Constant>(&v_)) return k->c;
    if (std::holds_alternative<Omega2>(v_)) return detail::slab_fraction(c[2], s, 1.0);
    if (auto* k = std::get_if<OmegaAB>(&v_)) {
      double fy = detail::omega_cover_length(c[1] - 0.5 * s, c[1] + 0.5 * s, k->a) / s;
      if (fy == 0.0) return 0.0;
      return fy * detail::omega_cover_length(c[2] - 0.5 * s, c[2] + 0.5 * s, k->b) / s;
    }
    if (std::holds_alternative<Omega1>(v_)) {
      double acc = 0.0;
      for (int a = 0; a < sub; ++a)
        for (int b = 0; b < sub; ++b) {
          double x1 = c[0] + ((a + 0.5) / sub - 0.5) * s, x2 = c[1] + ((b + 0.5) / sub - 0.5) * s;
          double rho = std::hypot(x1, x2);
          acc += rho == 0.0 ? 1.0 : detail::slab_fraction(c[2], s, 1.0 / std::sqrt(rho));
        }
      return acc / (sub * sub);
    }
    double acc = 0.0;
    for (int a = 0; a < sub; ++a)
      for (int b = 0; b < sub; ++b)
        for (int d = 0; d < sub; ++d)
          acc += value({c[0] + ((a + 0.5) / sub - 0.5) * s, c[1] + ((b + 0.5) / sub - 0.5) * s,
                        c[2] + ((d + 0.5) / sub - 0.5) * s});
    return acc / (sub * sub * sub);
  }

  // Bounding box of the support when it is bounded.
  std::optional<std::pair<Vec3, Vec3>> support_box() const {
    if (auto* g = std::get_if<weight_kind::Gridded>(&v_)) {
      Vec3 hi{g->origin[0] + g->nx * g->spacing, g->origin[1] + g->ny * g->spacing,
              g->origin[2] + g->nz * g->spacing};
      return std::make_pair(g->origin, hi);
    }
    return std::nullopt;
  }

 private:
  WeightVariant v_;
  double alpha_;
  std::string name_;
};

// Factory by kind name: omega1, omega2, omega_ab (params a, b), one, zero.
inline WeightPtr make_weight(const std::string& kind, double a = 0.0, double b = 0.0) {
  if (kind == "omega1") return Weight::omega1();
  if (kind == "omega2") return Weight::omega2();
  if (kind == "omega_ab") return Weight::omega_ab(a, b);
  if (kind == "one") return Weight::constant(1.0);
  if (kind == "zero") return Weight::constant(0.0);
  throw InvalidArgument("unknown weight kind '" + kind + "'");
}

}  // namespace rlab
