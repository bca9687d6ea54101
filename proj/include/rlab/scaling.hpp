#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rlab/core.hpp"
#include "rlab/extension.hpp"
#include "rlab/geometry.hpp"
#include "rlab/weights.hpp"

namespace rlab {

// Exact rational with 64-bit parts; overflow is checked through 128-bit
// intermediates.
struct Rational {
  long long n = 0, d = 1;

  constexpr Rational() = default;
  Rational(long long num, long long den = 1) : n(num), d(den) {
    require(den != 0, "rational with zero denominator");
    normalize();
  }

  double value() const { return static_cast<double>(n) / static_cast<double>(d); }
  std::string str() const { return d == 1 ? std::to_string(n) : std::to_string(n) + "/" + std::to_string(d); }

  friend Rational operator+(const Rational& a, const Rational& b) { return make(I(a.n) * b.d + I(b.n) * a.d, I(a.d) * b.d); }
  friend Rational operator-(const Rational& a, const Rational& b) { return make(I(a.n) * b.d - I(b.n) * a.d, I(a.d) * b.d); }
  friend Rational operator*(const Rational& a, const Rational& b) { return make(I(a.n) * b.n, I(a.d) * b.d); }
  friend Rational operator/(const Rational& a, const Rational& b) {
    require(b.n != 0, "rational division by zero");
    return make(I(a.n) * b.d, I(a.d) * b.n);
  }
  friend bool operator==(const Rational& a, const Rational& b) { return a.n == b.n && a.d == b.d; }
  friend bool operator<(const Rational& a, const Rational& b) { return I(a.n) * b.d < I(b.n) * a.d; }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }

 private:
  using I = __int128;
  static Rational make(I num, I den) {
    if (den < 0) num = -num, den = -den;
    I a = num < 0 ? -num : num, b = den;
    while (b != 0) {
      I t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) num /= a, den /= a;
    constexpr I lim = static_cast<I>(std::numeric_limits<long long>::max());
    if (num > lim || -num > lim || den > lim) throw NumericalError("rational arithmetic overflow");
    Rational r;
    r.n = static_cast<long long>(num);
    r.d = static_cast<long long>(den);
    return r;
  }
  void normalize() { *this = make(n, d); }
};

// Exponent formulas, generic over double and Rational.
template <class T>
T restriction_exponent(const T& a) {
  return T(2) * (T(4) * a + T(3)) / (T(2) * a + T(3));
}
template <class T>
T dual_exponent(const T& p, const T& gamma) {
  return T(2) * p / (T(2) * p - gamma);
}
template <class T>
T conjugate_exponent(const T& q) {
  return q / (q - T(1));
}

enum class Regime { I, III };

// Growth of int |sum a_l e(R w_l.x)|^p dmu for unit coefficients and N ~ R^2
// lattice frequencies: R^{2p} / R^alpha.
inline double expsum_exponent(double p, double alpha) { return 2.0 * p - alpha; }

struct ExponentTable {
  double alpha = 0.0;
  Regime regime = Regime::I;
  double p = 0.0;         // weighted restriction exponent
  double gamma = 3.0;     // power of ||f||_2 in the estimate
  double gamma_min = 3.0, gamma_sup = 3.0;  // admissible gamma: [min, sup) in regime III, {3} in regime I
  double p0 = 0.0;        // 2p / (2p - gamma)
  double p0_dual = 0.0;   // p0 / (p0 - 1)
  double b = 1.0;         // Lambda-class parameter used by parts (i) and (iii)
  bool part_ii = false;   // L^2-only estimate available (alpha < 2)
  double part_ii_growth = 0.0;  // (alpha - 3/2) / 4
  double decay_rate = 0.0;      // spherical means decay: alpha/p in I, 4 alpha/13 in III
  double decay_rate_l2 = 0.0;   // alpha/4 + 1/8 when part_ii
  // Exact values when alpha (and gamma) are rational.
  std::optional<Rational> p_exact, p0_exact, p0_dual_exact;

  double expsum_exponent() const { return rlab::expsum_exponent(p, alpha); }
};

namespace detail {

inline void check_alpha(double a) {
  if (!(a >= 1.5 && a <= 3.0)) throw InvalidArgument("exponent table needs 3/2 <= alpha <= 3, got " + std::to_string(a));
}

inline ExponentTable fill_table(double alpha, double gamma) {
  check_alpha(alpha);
  ExponentTable t;
  t.alpha = alpha;
  if (alpha < 2.5) {
    t.regime = Regime::I;
    t.p = restriction_exponent(alpha);
    t.gamma = t.gamma_min = t.gamma_sup = 3.0;
    t.decay_rate = alpha / t.p;
  } else {
    t.regime = Regime::III;
    t.p = 13.0 / 4.0;
    t.gamma_min = 2.0;
    t.gamma_sup = 5.5 - alpha;
    if (!(gamma >= t.gamma_min && gamma < t.gamma_sup))
      throw InvalidArgument("gamma must lie in [2, 11/2 - alpha) for alpha >= 5/2");
    t.gamma = gamma;
    t.decay_rate = 4.0 * alpha / 13.0;
  }
  t.p0 = dual_exponent(t.p, t.gamma);
  t.p0_dual = conjugate_exponent(t.p0);
  t.part_ii = alpha < 2.0;
  if (t.part_ii) {
    t.part_ii_growth = (alpha - 1.5) / 4.0;
    t.decay_rate_l2 = alpha / 4.0 + 1.0 / 8.0;
  }
  return t;
}

}  // namespace detail

// gamma only matters in regime III.
inline ExponentTable exponents(double alpha, double gamma = 2.0) { return detail::fill_table(alpha, gamma); }

inline ExponentTable exponents(const Rational& alpha, const Rational& gamma = Rational(2)) {
  ExponentTable t = detail::fill_table(alpha.value(), gamma.value());
  Rational p = t.regime == Regime::I ? restriction_exponent(alpha) : Rational(13, 4);
  Rational g = t.regime == Regime::I ? Rational(3) : gamma;
  t.p_exact = p;
  t.p0_exact = dual_exponent(p, g);
  t.p0_dual_exact = conjugate_exponent(*t.p0_exact);
  return t;
}

enum class WeightFactor { A_alpha_p, calA_alpha_p };

// max(A, A^{1 - p/4}) or max(A, A^{2 - p/2}).
inline double weight_factor(double A, double p, WeightFactor variant) {
  require(A >= 0.0, "A_alpha must be nonnegative");
  double e = variant == WeightFactor::A_alpha_p ? 1.0 - p / 4.0 : 2.0 - p / 2.0;
  return std::max(A, std::pow(A, e));
}

// Tx = ((r x1, r x2) + r x3 grad h(w0), r^2 x3).
struct ParabolicMap {
  Vec2 omega0{0.0, 0.0};
  double r = 1.0;
  Vec2 grad{0.0, 0.0};
  double J = 1.0;
  std::array<double, 9> T{}, Tinv{}, A{};  // row-major
  std::array<double, 3> lambda{};          // closed forms, in the order lambda_1, lambda_2, lambda_3

  double det() const { return r * r * r * r; }
  Vec3 apply(const Vec3& x) const { return mul(T, x); }
  Vec3 apply_inverse(const Vec3& u) const { return mul(Tinv, u); }

  // Ascending eigenvalues of A by a symmetric eigensolver.
  std::array<double, 3> numeric_eigenvalues() const {
    Eigen::Matrix3d M;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) M(i, j) = A[3 * i + j];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(M, Eigen::EigenvaluesOnly);
    auto ev = es.eigenvalues();
    return {ev(0), ev(1), ev(2)};
  }

  // Largest |numeric - closed form| after sorting both.
  double eigen_mismatch() const {
    auto num = numeric_eigenvalues();
    auto cf = lambda;
    std::sort(cf.begin(), cf.end());
    double m = 0.0;
    for (int k = 0; k < 3; ++k) m = std::max(m, std::abs(num[k] - cf[k]));
    return m;
  }

 private:
  static Vec3 mul(const std::array<double, 9>& M, const Vec3& x) {
    return {M[0] * x[0] + M[1] * x[1] + M[2] * x[2], M[3] * x[0] + M[4] * x[1] + M[5] * x[2],
            M[6] * x[0] + M[7] * x[1] + M[8] * x[2]};
  }
};

inline ParabolicMap parabolic_map(const HeightSpec& h, const Vec2& omega0, double r) {
  require(r > 0.0 && r <= 1.0, "parabolic map needs 0 < r <= 1");
  require(norm(omega0) <= 1.0 + 1e-12, "cap center must lie in the closed unit disc");
  ParabolicMap m;
  m.omega0 = omega0;
  m.r = r;
  m.grad = h.gradient(omega0);
  const double g1 = m.grad[0], g2 = m.grad[1], r2 = r * r, r4 = r2 * r2;
  m.J = std::sqrt(1.0 + g1 * g1 + g2 * g2);
  m.T = {r, 0, r * g1, 0, r, r * g2, 0, 0, r2};
  m.Tinv = {1 / r, 0, -g1 / r2, 0, 1 / r, -g2 / r2, 0, 0, 1 / r2};
  m.A = {r2, 0, r2 * g1, 0, r2, r2 * g2, r2 * g1, r2 * g2, r2 * (g1 * g1 + g2 * g2) + r4};
  // Characteristic polynomial (r^2 - l)(l^2 - (r^2 J^2 + r^4) l + r^6).
  const double s = r2 * m.J * m.J + r4;
  const double disc = std::sqrt(std::max(0.0, s * s - 4.0 * r4 * r2));
  m.lambda = {r2, 2.0 * r4 * r2 / (s + disc), 0.5 * (s + disc)};
  return m;
}

// H' = H o T^{-1}, kept exact rather than gridded.
inline WeightPtr pushforward_weight(const WeightPtr& H, const ParabolicMap& m) {
  return Weight::transformed(H, m.Tinv, H->claimed_dimension());
}

inline double pushforward_bound_factor(double r, double alpha) { return 192.0 * std::pow(r, 3.0 - alpha); }

// S_1 = graph of h_1(eta) = r^{-2} (h(w0 + r eta) - h(w0) - r eta . grad h(w0)).
inline HeightSpec rescaled_height(const HeightSpec& h, const ParabolicMap& m) {
  if (h.paraboloid) {
    auto p = HeightSpec::paraboloid_spec();
    p.name = "paraboloid (rescaled)";
    return p;
  }
  HeightSpec out;
  out.name = h.name + " (rescaled)";
  out.smoothness_order = h.smoothness_order;
  const Vec2 w0 = m.omega0, g0 = m.grad;
  const double r = m.r, h0 = h.value(w0);
  out.value_fn = [h, w0, g0, r, h0](const Vec2& e) {
    return (h.value(w0 + r * e) - h0 - r * dot(e, g0)) / (r * r);
  };
  out.grad_fn = [h, w0, g0, r](const Vec2& e) {
    Vec2 g = h.gradient(w0 + r * e);
    return Vec2{(g[0] - g0[0]) / r, (g[1] - g0[1]) / r};
  };
  out.hess_fn = [h, w0, r](const Vec2& e) { return h.hessian(w0 + r * e); };
  return out;
}

struct RescaledFunction {
  SurfaceGraph S1;
  AmplitudeFunction f_cap;  // f restricted to the cap on S
  AmplitudeFunction g;      // on S1
};

// g(eta) = r^2 f(w0 + r eta) J_h(w0 + r eta) / J_{h1}(eta). f is a callable on
// parameter space so that both grids sample it exactly.
template <class F>
RescaledFunction rescale_function(const SurfaceGraph& S, const ParabolicMap& m, F&& f, int resolution) {
  HeightSpec h1 = rescaled_height(S.h, m);
  RescaledFunction out{build_surface(h1, resolution), {}, {}};
  std::vector<cplx> fv(S.nodes.size(), 0.0);
  for (int k : nodes_in_disc(S, m.omega0, m.r)) fv[k] = f(S.nodes[k].omega);
  out.f_cap = AmplitudeFunction(S, std::move(fv));
  out.g = AmplitudeFunction::from_function(out.S1, [&](const Vec2& e) {
    Vec2 w = m.omega0 + m.r * e;
    return m.r * m.r * f(w) * S.h.jacobian(w) / h1.jacobian(e);
  });
  return out;
}

struct ScalingFit {
  std::vector<double> log_R, log_value;
  double slope = 0.0, intercept = 0.0;
  double residual = 0.0;   // RMS of log residuals
  double slope_se = 0.0;   // standard error of the slope, 0 for 3 exact points
  double predict(double R) const { return std::exp(intercept + slope * std::log(R)); }
};

// Unweighted least squares of log value against log R.
inline ScalingFit fit_scaling(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 3) throw InvalidArgument("scaling fit needs at least 3 (R, value) pairs, got " + std::to_string(pairs.size()));
  auto sorted = pairs;
  std::sort(sorted.begin(), sorted.end());
  ScalingFit fit;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    auto [R, v] = sorted[k];
    if (!(R > 0.0)) throw InvalidArgument("scaling fit needs R > 0");
    if (!(v > 0.0)) throw InvalidArgument("scaling fit needs positive values; got " + std::to_string(v) + " at R = " + std::to_string(R));
    if (k > 0 && R == sorted[k - 1].first) throw InvalidArgument("scaling fit needs distinct R values");
    fit.log_R.push_back(std::log(R));
    fit.log_value.push_back(std::log(v));
  }
  const double n = static_cast<double>(sorted.size());
  double mx = std::accumulate(fit.log_R.begin(), fit.log_R.end(), 0.0) / n;
  double my = std::accumulate(fit.log_value.begin(), fit.log_value.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < fit.log_R.size(); ++k) {
    sxx += (fit.log_R[k] - mx) * (fit.log_R[k] - mx);
    sxy += (fit.log_R[k] - mx) * (fit.log_value[k] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (std::size_t k = 0; k < fit.log_R.size(); ++k) {
    double e = fit.log_value[k] - fit.intercept - fit.slope * fit.log_R[k];
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / n);
  fit.slope_se = n > 2 ? std::sqrt(ss / (n - 2) / sxx) : 0.0;
  return fit;
}

}  // namespace rlab
