#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rlab/extension.hpp"
#include "rlab/geometry.hpp"
#include "rlab/measures.hpp"
#include "rlab/partition.hpp"
#include "rlab/scaling.hpp"
#include "rlab/wavepacket.hpp"
#include "rlab/weights.hpp"

namespace rlab {

// Malformed or inconsistent experiment configuration.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Acceptance windows shared by every driver.
inline constexpr double kScalingWindow = 0.35;   // allowed excess growth exponent
inline constexpr double kSlopeWindow = 0.25;     // half width on fitted slopes
inline constexpr double kConstantWindow = 4.0;   // factor on fitted constants
inline constexpr double kUpperSlack = 0.15;      // R^{0.15} on upper-bound checks

enum class Verdict { PASS, FAIL, VACUOUS };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::PASS: return "PASS";
    case Verdict::FAIL: return "FAIL";
    case Verdict::VACUOUS: return "VACUOUS";
  }
  return "?";
}

// ---------------------------------------------------------------- config

struct ConfigEntry {
  std::string key;  // section.name
  std::string value;
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::optional<Rational> parse_rational(const std::string& s) {
  auto slash = s.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      long long n = std::stoll(s, &used);
      if (used != s.size()) return std::nullopt;
      return Rational(n);
    }
    std::string a = s.substr(0, slash), b = s.substr(slash + 1);
    long long n = std::stoll(a, &used);
    if (used != a.size()) return std::nullopt;
    long long d = std::stoll(b, &used);
    if (used != b.size() || d == 0) return std::nullopt;
    return Rational(n, d);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline double parse_number(const std::string& key, const std::string& s) {
  if (auto r = parse_rational(s)) return r->value();
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': '" + s + "' is not a number");
}

inline long long parse_integer(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': '" + s + "' is not an integer");
}

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t draw_seed(std::uint64_t seed, int draw) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(draw)};
  std::array<std::uint32_t, 2> out;
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace detail

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{"weighted-scaling", "trace",     "expsum-sharpness", "spherical-means",
                                          "partition-demo",   "wavepacket-demo", "surface", "weights",
                                          "measure",          "scaling"};
  return k;
}

struct ExperimentConfig {
  std::vector<ConfigEntry> entries;  // verbatim, in file order, after overrides

  std::string kind;
  std::string alpha_text = "3/2";
  double alpha = 1.5;
  std::vector<double> R;
  std::string surface = "paraboloid";
  int resolution = 0;              // fixed surface resolution, 0 = tied to R
  double resolution_factor = 4.0;  // resolution = factor * R when tied
  std::string weight = "omega1";
  double weight_a = 0.0, weight_b = 0.0;
  std::vector<std::string> weights{"one", "omega1", "omega2"};  // trace runs
  std::string measure = "cantor";
  int measure_level = 6;
  double measure_radius = 1e-3;  // point-mass mollification radius
  double p = 0.0;                // 0 = the exponent table's p
  std::string q_text = "2";
  double K = 4.0, delta = 0.1, b = 1.0, gamma = 2.0;
  std::string part = "i";
  int N = 0;  // exponential-sum frequencies: 0 = all of (1/R) Z^2 in the disc, 1 = one
  double witness_c = 0.25;
  std::vector<int> D{1, 2, 4};
  int caps = 3, packets = 16, decay_order = 2;
  int lines = 100, tubes = 50, grid = 48, checks = 100;
  std::vector<std::string> f_kinds{"gaussian"};
  std::uint64_t seed = 1;
  int draws = 5;
  AScanOptions scan;
  std::string out_dir = ".";
  std::string out_name;
  std::string format = "json";

  std::string text() const {
    std::string s;
    for (const auto& e : entries) s += e.key + "=" + e.value + "\n";
    return s;
  }
  std::uint64_t hash() const { return detail::fnv1a(text()); }
  std::string hash_hex() const {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
  }
  std::optional<Rational> alpha_exact() const { return detail::parse_rational(alpha_text); }
  const std::string* find(const std::string& key) const {
    for (const auto& e : entries)
      if (e.key == key) return &e.value;
    return nullptr;
  }
};

namespace detail {

inline void kind_defaults(ExperimentConfig& c) {
  c.scan.R_max = 8.0;
  c.scan.center_spacing = 1.0;
  c.scan.center_box = std::pair<Vec3, Vec3>{{-1, -1, -1}, {1, 1, 1}};
  c.scan.points_per_radius = 16.0;
  const std::string& k = c.kind;
  if (k == "weighted-scaling") {
    c.R = {4, 8, 16, 32};
  } else if (k == "trace") {
    c.R = {4, 8, 16};
    c.f_kinds = {"smooth"};
  } else if (k == "expsum-sharpness") {
    c.R = {16, 32, 64, 128};
  } else if (k == "spherical-means") {
    c.R = {8, 16, 32, 64, 128, 256};
  } else if (k == "partition-demo" || k == "wavepacket-demo") {
    c.R = {256};
    c.resolution_factor = 2.0;
  } else if (k == "surface") {
    c.R = {256};
    c.resolution_factor = 1.0;
  } else {
    c.R = {8};
  }
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  using C = ExperimentConfig;
  static const std::map<std::string, Setter> m{
      {"experiment.kind", [](C&, const std::string&, const std::string&) {}},
      {"experiment.seed",
       [](C& c, const std::string& k, const std::string& v) {
         long long s = parse_integer(k, v);
         if (s < 0) throw ConfigError("experiment.seed must be nonnegative");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      {"experiment.draws",
       [](C& c, const std::string& k, const std::string& v) {
         c.draws = static_cast<int>(parse_integer(k, v));
         if (c.draws < 1 || c.draws > 100) throw ConfigError("experiment.draws must lie in [1, 100]");
       }},
      {"params.alpha",
       [](C& c, const std::string& k, const std::string& v) {
         c.alpha_text = v;
         c.alpha = parse_number(k, v);
       }},
      {"params.R",
       [](C& c, const std::string& k, const std::string& v) {
         c.R.clear();
         for (const auto& t : split_list(v)) c.R.push_back(parse_number(k, t));
         if (c.R.empty()) throw ConfigError("params.R needs at least one radius");
         std::set<double> seen;
         for (double r : c.R) {
           if (!(r >= 1.0)) throw ConfigError("params.R entries must be >= 1");
           if (!seen.insert(r).second) throw ConfigError("params.R has a repeated radius");
         }
       }},
      {"params.p", [](C& c, const std::string& k, const std::string& v) { c.p = parse_number(k, v); }},
      {"params.q", [](C& c, const std::string&, const std::string& v) { c.q_text = v; }},
      {"params.K", [](C& c, const std::string& k, const std::string& v) { c.K = parse_number(k, v); }},
      {"params.delta", [](C& c, const std::string& k, const std::string& v) { c.delta = parse_number(k, v); }},
      {"params.b", [](C& c, const std::string& k, const std::string& v) { c.b = parse_number(k, v); }},
      {"params.gamma", [](C& c, const std::string& k, const std::string& v) { c.gamma = parse_number(k, v); }},
      {"params.part",
       [](C& c, const std::string&, const std::string& v) {
         if (v != "i" && v != "ii") throw ConfigError("params.part must be 'i' or 'ii'");
         c.part = v;
       }},
      {"params.N",
       [](C& c, const std::string& k, const std::string& v) {
         if (v == "all") {
           c.N = 0;
           return;
         }
         c.N = static_cast<int>(parse_integer(k, v));
         if (c.N != 1) throw ConfigError("params.N must be 'all' or 1");
       }},
      {"params.witness_c", [](C& c, const std::string& k, const std::string& v) { c.witness_c = parse_number(k, v); }},
      {"params.D",
       [](C& c, const std::string& k, const std::string& v) {
         c.D.clear();
         for (const auto& t : split_list(v)) c.D.push_back(static_cast<int>(parse_integer(k, t)));
         if (c.D.empty()) throw ConfigError("params.D needs at least one degree");
       }},
      {"params.caps", [](C& c, const std::string& k, const std::string& v) { c.caps = static_cast<int>(parse_integer(k, v)); }},
      {"params.packets", [](C& c, const std::string& k, const std::string& v) { c.packets = static_cast<int>(parse_integer(k, v)); }},
      {"params.decay_order", [](C& c, const std::string& k, const std::string& v) { c.decay_order = static_cast<int>(parse_integer(k, v)); }},
      {"params.lines", [](C& c, const std::string& k, const std::string& v) { c.lines = static_cast<int>(parse_integer(k, v)); }},
      {"params.tubes", [](C& c, const std::string& k, const std::string& v) { c.tubes = static_cast<int>(parse_integer(k, v)); }},
      {"params.grid", [](C& c, const std::string& k, const std::string& v) { c.grid = static_cast<int>(parse_integer(k, v)); }},
      {"params.checks", [](C& c, const std::string& k, const std::string& v) { c.checks = static_cast<int>(parse_integer(k, v)); }},
      {"params.f",
       [](C& c, const std::string&, const std::string& v) {
         c.f_kinds = split_list(v);
         if (c.f_kinds.empty()) throw ConfigError("params.f needs at least one family");
         for (const auto& f : c.f_kinds)
           if (f != "gaussian" && f != "smooth") throw ConfigError("params.f entries must be 'gaussian' or 'smooth'");
       }},
      {"surface.shape",
       [](C& c, const std::string&, const std::string& v) {
         if (v != "paraboloid" && v != "perturbed") throw ConfigError("surface.shape must be 'paraboloid' or 'perturbed'");
         c.surface = v;
       }},
      {"surface.resolution",
       [](C& c, const std::string& k, const std::string& v) {
         c.resolution = static_cast<int>(parse_integer(k, v));
         if (c.resolution < 0) throw ConfigError("surface.resolution must be >= 0");
       }},
      {"surface.resolution_factor",
       [](C& c, const std::string& k, const std::string& v) {
         c.resolution_factor = parse_number(k, v);
         if (!(c.resolution_factor > 0.0)) throw ConfigError("surface.resolution_factor must be positive");
       }},
      {"weight.kind", [](C& c, const std::string&, const std::string& v) { c.weight = v; }},
      {"weight.a", [](C& c, const std::string& k, const std::string& v) { c.weight_a = parse_number(k, v); }},
      {"weight.b", [](C& c, const std::string& k, const std::string& v) { c.weight_b = parse_number(k, v); }},
      {"weight.list", [](C& c, const std::string&, const std::string& v) { c.weights = split_list(v); }},
      {"measure.kind",
       [](C& c, const std::string&, const std::string& v) {
         if (v != "cantor" && v != "point") throw ConfigError("measure.kind must be 'cantor' or 'point'");
         c.measure = v;
       }},
      {"measure.level", [](C& c, const std::string& k, const std::string& v) { c.measure_level = static_cast<int>(parse_integer(k, v)); }},
      {"measure.radius", [](C& c, const std::string& k, const std::string& v) { c.measure_radius = parse_number(k, v); }},
      {"scan.R_max", [](C& c, const std::string& k, const std::string& v) { c.scan.R_max = parse_number(k, v); }},
      {"scan.center_spacing", [](C& c, const std::string& k, const std::string& v) { c.scan.center_spacing = parse_number(k, v); }},
      {"scan.center_half_width",
       [](C& c, const std::string& k, const std::string& v) {
         double w = parse_number(k, v);
         c.scan.center_box = std::pair<Vec3, Vec3>{{-w, -w, -w}, {w, w, w}};
       }},
      {"scan.points_per_radius", [](C& c, const std::string& k, const std::string& v) { c.scan.points_per_radius = parse_number(k, v); }},
      {"output.dir", [](C& c, const std::string&, const std::string& v) { c.out_dir = v; }},
      {"output.name", [](C& c, const std::string&, const std::string& v) { c.out_name = v; }},
      {"output.format",
       [](C& c, const std::string&, const std::string& v) {
         if (v != "json" && v != "csv" && v != "both") throw ConfigError("output.format must be json, csv or both");
         c.format = v;
       }},
  };
  return m;
}

}  // namespace detail

// Builds the typed view from entries. Every key must be known.
inline ExperimentConfig make_config(std::vector<ConfigEntry> entries) {
  ExperimentConfig c;
  c.entries = std::move(entries);
  const std::string* kind = c.find("experiment.kind");
  if (!kind) throw ConfigError("config needs experiment.kind");
  c.kind = *kind;
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) {
    std::string all;
    for (const auto& k : kinds) all += (all.empty() ? "" : ", ") + k;
    throw ConfigError("unknown experiment kind '" + c.kind + "'; expected one of " + all);
  }
  detail::kind_defaults(c);
  const auto& set = detail::setters();
  std::set<std::string> seen;
  for (const auto& e : c.entries) {
    if (!seen.insert(e.key).second) throw ConfigError("config key '" + e.key + "' given twice");
    auto it = set.find(e.key);
    if (it == set.end()) {
      std::string all;
      for (const auto& [k, _] : set) all += (all.empty() ? "" : ", ") + k;
      throw ConfigError("unknown config key '" + e.key + "'; known keys: " + all);
    }
    it->second(c, e.key, e.value);
  }
  if (c.out_name.empty()) c.out_name = c.kind;
  return c;
}

// Replaces or appends one entry, then re-resolves.
inline ExperimentConfig with_entry(const ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto e = c.entries;
  bool found = false;
  for (auto& x : e)
    if (x.key == key) x.value = value, found = true;
  if (!found) e.push_back({key, value});
  return make_config(std::move(e));
}

// INI text: [section] headers and key = value lines.
inline ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  std::vector<ConfigEntry> entries;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' must sit inside a [section]");
    for (const auto& [key, val] : body) entries.push_back({section + "." + key, detail::trim(val.data())});
  }
  return make_config(std::move(entries));
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

inline ExperimentConfig default_config(const std::string& kind) { return make_config({{"experiment.kind", kind}}); }

// ---------------------------------------------------------------- records

struct Row {
  std::string series;
  double R = 0.0;
  int draw = 0;
  double value = 0.0;
};

struct Fit {
  std::string series;
  int draw = 0;
  double slope = 0.0, intercept = 0.0, residual = 0.0;
  double predicted = 0.0;  // exponent from the scaling module
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  bool judged = true;
  bool rejected = false;
  std::string message;
  Verdict verdict = Verdict::PASS;
  double model(double R) const { return std::exp(intercept + slope * std::log(R)); }
};

struct Check {
  std::string name;
  double value = 0.0;
  std::string relation = "<=";
  double bound = 0.0;
  Verdict verdict = Verdict::PASS;
};

struct RunRecord {
  ExperimentConfig config;
  std::vector<Row> rows;
  std::vector<Fit> fits;
  std::vector<Check> checks;
  std::vector<std::pair<std::string, double>> scalars;
  std::vector<std::string> notes;
  Verdict verdict = Verdict::PASS;
  double wall_clock_s = 0.0;  // reported on stderr only, so outputs stay byte-identical

  void add_row(const std::string& s, double R, int draw, double v) { rows.push_back({s, R, draw, v}); }
  void add_scalar(const std::string& k, double v) { scalars.push_back({k, v}); }
  Check& check_le(const std::string& name, double value, double bound) {
    checks.push_back({name, value, "<=", bound, value <= bound ? Verdict::PASS : Verdict::FAIL});
    return checks.back();
  }
  Check& check_ge(const std::string& name, double value, double bound) {
    checks.push_back({name, value, ">=", bound, value >= bound ? Verdict::PASS : Verdict::FAIL});
    return checks.back();
  }
  // Fits the rows of one series and draw; a failed fit is kept as rejected.
  Fit& add_fit(const std::string& series, int draw, double predicted, double lo, double hi, bool judged = true) {
    std::vector<std::pair<double, double>> pairs;
    for (const auto& r : rows)
      if (r.series == series && r.draw == draw) pairs.push_back({r.R, r.value});
    Fit f;
    f.series = series;
    f.draw = draw;
    f.predicted = predicted;
    f.lo = lo;
    f.hi = hi;
    f.judged = judged;
    try {
      auto s = fit_scaling(pairs);
      f.slope = s.slope;
      f.intercept = s.intercept;
      f.residual = s.residual;
      f.verdict = !judged || (f.slope >= lo && f.slope <= hi) ? Verdict::PASS : Verdict::FAIL;
    } catch (const InvalidArgument& e) {
      f.rejected = true;
      f.message = std::string("fit rejected: ") + e.what();
      f.verdict = Verdict::FAIL;
    }
    fits.push_back(f);
    return fits.back();
  }
  void finalize() {
    bool fail = false, vac = false;
    for (const auto& c : checks) fail |= c.verdict == Verdict::FAIL, vac |= c.verdict == Verdict::VACUOUS;
    for (const auto& f : fits) fail |= f.verdict == Verdict::FAIL, vac |= f.verdict == Verdict::VACUOUS;
    verdict = fail ? Verdict::FAIL : vac ? Verdict::VACUOUS : Verdict::PASS;
  }
  double scalar(const std::string& k) const {
    for (const auto& [n, v] : scalars)
      if (n == k) return v;
    throw InvalidArgument("run record has no scalar '" + k + "'");
  }
  const Check& check(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw InvalidArgument("run record has no check '" + name + "'");
  }
};

// ---------------------------------------------------------------- helpers

namespace detail {

inline HeightSpec make_height(const std::string& shape) {
  if (shape == "paraboloid") return HeightSpec::paraboloid_spec();
  return HeightSpec::polynomial("perturbed", {{2, 0, 0.5}, {0, 2, 0.5}, {3, 0, 0.02}, {1, 2, -0.01}});
}

inline int resolution_for(const ExperimentConfig& c, double R, int floor_res) {
  if (c.resolution > 0) return c.resolution;
  return std::max(floor_res, static_cast<int>(std::lround(c.resolution_factor * R)));
}

class SurfaceCache {
 public:
  explicit SurfaceCache(HeightSpec h) : h_(std::move(h)) {}
  const SurfaceGraph& get(int res) {
    auto it = cache_.find(res);
    if (it == cache_.end()) it = cache_.emplace(res, build_surface(h_, res)).first;
    return it->second;
  }

 private:
  HeightSpec h_;
  std::map<int, SurfaceGraph> cache_;
};

inline WeightPtr config_weight(const ExperimentConfig& c, const std::string& kind) {
  try {
    return make_weight(kind, c.weight_a, c.weight_b);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

inline ExponentTable config_exponents(const ExperimentConfig& c) {
  try {
    if (auto a = c.alpha_exact()) {
      auto g = parse_rational(detail::format_double(c.gamma));
      return g ? exponents(*a, *g) : exponents(c.alpha, c.gamma);
    }
    return exponents(c.alpha, c.gamma);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

inline AmplitudeFunction draw_function(const SurfaceGraph& S, const std::string& kind, std::uint64_t seed) {
  return kind == "gaussian" ? AmplitudeFunction::gaussian(S, seed) : AmplitudeFunction::random_smooth(S, seed);
}

inline double bump(double t) { return t < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

inline Vec3 unit(const Vec3& v) { return (1.0 / norm(v)) * v; }

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  return unit({N(rng), N(rng), N(rng)});
}

inline Vec3 random_in_ball(std::mt19937_64& rng, double R) {
  std::uniform_real_distribution<double> U(-R, R);
  Vec3 x;
  do x = {U(rng), U(rng), U(rng)};
  while (norm(x) > R);
  return x;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

inline void expect_kind(const ExperimentConfig& c, std::initializer_list<const char*> kinds) {
  for (const char* k : kinds)
    if (c.kind == k) return;
  throw ConfigError("driver called with experiment kind '" + c.kind + "'");
}

}  // namespace detail

// ---------------------------------------------------------------- drivers

// Q(R) = int_{B_R} |Ef|^p H / (A_{alpha,p}(H) N(f)) with N(f) = ||f||_2^3 ||f||_inf^{p-3}
// (part i) or ||f||_2^p (part ii), for Lambda-class f drawn afresh at each R.
inline RunRecord run_weighted_scaling(const ExperimentConfig& c) {
  detail::expect_kind(c, {"weighted-scaling"});
  detail::Timer timer;
  RunRecord rec;
  rec.config = c;
  const auto t = detail::config_exponents(c);
  const double p = c.p > 0.0 ? c.p : t.p;
  auto H = detail::config_weight(c, c.weight);
  if (!H->is_zero() && std::abs(H->claimed_dimension() - c.alpha) > 1e-12)
    throw ConfigError("weight '" + H->name() + "' has claimed dimension " + detail::format_double(H->claimed_dimension()) +
                      " but alpha = " + c.alpha_text);
  if (c.part == "ii" && !t.part_ii) throw ConfigError("part ii needs alpha < 2");
  if (c.R.size() < 3) throw ConfigError("weighted scaling needs at least 3 radii");
  const double A = H->is_zero() ? 0.0 : estimate_A_alpha(*H, c.alpha, c.scan).value;
  const double factor = H->is_zero() ? 0.0 : weight_factor(A, p, WeightFactor::A_alpha_p);
  const double predicted = c.part == "i" ? 0.0 : t.part_ii_growth;
  rec.add_scalar("p", p);
  rec.add_scalar("A_alpha_scan", A);
  rec.add_scalar("A_alpha_p", factor);
  rec.add_scalar("predicted_exponent", predicted);
  rec.add_scalar("window", kScalingWindow);
  detail::SurfaceCache surfaces(detail::make_height(c.surface));
  for (const auto& fam : c.f_kinds) {
    const std::string series = "Q_" + fam;
    for (int d = 0; d < c.draws; ++d) {
      for (double R : c.R) {
        const auto& S = surfaces.get(detail::resolution_for(c, R, 16));
        auto f = lambda_class_normalize(S, detail::draw_function(S, fam, detail::draw_seed(c.seed, d)), R, c.b);
        const auto& n = f.norms();
        double denom = c.part == "i" ? std::pow(n.l2, 3.0) * std::pow(n.linf, p - 3.0) : std::pow(n.l2, p);
        double lhs = weighted_lp_norm(S, f, p, *H, R).integral;
        rec.add_row(series, R, d, lhs == 0.0 ? 0.0 : lhs / (factor * denom));
      }
      auto& fit = rec.add_fit(series, d, predicted, -std::numeric_limits<double>::infinity(), predicted + kScalingWindow);
      if (fit.rejected && H->is_zero()) fit.message = "fit rejected: the weight is identically zero, so every integral vanishes";
    }
  }
  rec.notes.push_back("slopes below the allowed window pass: the estimate is an upper bound");
  rec.finalize();
  rec.wall_clock_s = timer.seconds();
  return rec;
}

// int_{B_R} |Ef|^2 H <= C A_alpha(H) R ||f||_2^2 with C fitted once at the smallest R
// as the largest ratio over all (H, f), checked at the other radii within the factor window.
inline RunRecord run_trace_inequality(const ExperimentConfig& c) {
  detail::expect_kind(c, {"trace"});
  detail::Timer timer;
  RunRecord rec;
  rec.config = c;
  if (c.R.size() < 2) throw ConfigError("trace run needs at least 2 radii");
  auto Rs = c.R;
  std::sort(Rs.begin(), Rs.end());
  const int res = c.resolution > 0 ? c.resolution : std::max(16, static_cast<int>(std::lround(c.resolution_factor * Rs.back())));
  const auto S = build_surface(detail::make_height(c.surface), res);
  struct Series {
    std::string name;
    double A;
    std::vector<double> ratio;  // [draw * |R| + r]
  };
  std::vector<Series> all;
  double Chat = 0.0;
  for (const auto& wk : c.weights) {
    auto H = detail::config_weight(c, wk);
    if (H->is_zero()) throw ConfigError("trace run needs nonzero weights");
    Series s{wk, estimate_A_alpha(*H, H->claimed_dimension(), c.scan).value, {}};
    rec.add_scalar("A_alpha_scan_" + wk, s.A);
    for (int d = 0; d < c.draws; ++d) {
      auto f = detail::draw_function(S, c.f_kinds.front(), detail::draw_seed(c.seed, d));
      double l2 = f.norms().l2;
      for (std::size_t r = 0; r < Rs.size(); ++r) {
        double lhs = weighted_lp_norm(S, f, 2.0, *H, Rs[r]).integral;
        double v = lhs / (s.A * Rs[r] * l2 * l2);
        s.ratio.push_back(v);
        rec.add_row("trace_" + wk, Rs[r], d, v);
        if (r == 0) Chat = std::max(Chat, v);
      }
    }
    all.push_back(std::move(s));
  }
  rec.add_scalar("C_fitted", Chat);
  rec.add_scalar("resolution", res);
  for (const auto& s : all) {
    double worst = 0.0;
    for (double v : s.ratio) worst = std::max(worst, v / Chat);
    rec.check_le("trace_" + s.name + "_over_C", worst, kConstantWindow);
  }
  rec.finalize();
  rec.wall_clock_s = timer.seconds();
  return rec;
}

inline FrequencySet single_frequency(const HeightSpec& h, double R) {
  FrequencySet F;
  F.R = R;
  F.w = {{0.0, 0.0, h.value({0.0, 0.0})}};
  F.lattice = {{0, 0}};
  F.on_lattice = true;
  F.paraboloid = h.paraboloid;
  return F;
}

// Full integral int |sum e(R w.x)|^p dmu and the witness restricted to |x| <= c/R.
inline RunRecord run_expsum_sharpness(const ExperimentConfig& c) {
  detail::expect_kind(c, {"expsum-sharpness"});
  detail::Timer timer;
  RunRecord rec;
  rec.config = c;
  const auto t = detail::config_exponents(c);
  const double p = c.p > 0.0 ? c.p : t.p;
  if (c.R.size() < 3) throw ConfigError("exponential-sum run needs at least 3 radii");
  if (c.measure != "cantor") throw ConfigError("exponential-sum run needs measure.kind = cantor");
  const double Rmax = *std::max_element(c.R.begin(), c.R.end());
  auto mu = cantor_product_measure(c.alpha, c.measure_level);
  if (!(mu.atom_scale < 1.0 / Rmax))
    throw ConfigError("cantor level " + std::to_string(c.measure_level) + " is too coarse for R_max = " +
                      detail::format_double(Rmax) + ": atom scale " + detail::format_double(mu.atom_scale) +
                      " is not below 1/R_max");
  const auto h = detail::make_height(c.surface);
  const double predicted = c.N == 1 ? 0.0 : expsum_exponent(p, c.alpha);
  rec.add_scalar("p", p);
  rec.add_scalar("predicted_exponent", predicted);
  rec.add_scalar("atom_scale", mu.atom_scale);
  for (double R : c.R) {
    auto F = c.N == 1 ? single_frequency(h, R) : r_separated_caps(h, R);
    std::vector<cplx> a(F.w.size(), 1.0);
    rec.add_row("full", R, 0, exponential_sum_eval(F, a, mu, p));
    rec.add_row("frequencies", R, 0, static_cast<double>(F.w.size()));
    if (c.N != 1) {
      std::vector<Atom> near;
      for (const auto& at : mu.atoms)
        if (norm(at.x) <= c.witness_c / R) near.push_back(at);
      double w = near.empty() ? 0.0 : exponential_sum_eval(F, a, measure_from_atoms(near, c.alpha), p);
      rec.add_row("witness", R, 0, w);
    }
  }
  rec.add_fit("full", 0, predicted, predicted - kSlopeWindow, predicted + kSlopeWindow);
  if (c.N != 1)
    rec.add_fit("witness", 0, predicted, predicted - kSlopeWindow, std::numeric_limits<double>::infinity());
  else
    rec.notes.push_back("single frequency: the integral is the total mass at every R; witness skipped");
  rec.finalize();
  rec.wall_clock_s = timer.seconds();
  return rec;
}

// ||mu^(R .)||_{L^q(S)} against C R^{0.15} R^{-rate} sqrt(I_alpha), C fitted at the
// smallest R. VACUOUS when sqrt(I_alpha) R^{-rate} never drops below the trivial
// bound ||mu|| sigma(S)^{1/q}.
inline RunRecord run_spherical_means(const ExperimentConfig& c) {
  detail::expect_kind(c, {"spherical-means"});
  detail::Timer timer;
  RunRecord rec;
  rec.config = c;
  const auto t = detail::config_exponents(c);
  double q = 0.0;
  if (c.q_text == "p0")
    q = t.p0;
  else
    q = detail::parse_number("params.q", c.q_text);
  double rate = 0.0;
  if (std::abs(q - 2.0) < 1e-12 && t.part_ii)
    rate = t.decay_rate_l2;
  else if (q >= 1.0 && q <= t.p0 + 1e-12)
    rate = t.decay_rate;
  else
    throw ConfigError("params.q must be 1, p0 or 2 (2 only for alpha < 2 or when 2 <= p0)");
  if (c.R.size() < 2) throw ConfigError("spherical-means run needs at least 2 radii");
  FractalMeasure mu = c.measure == "cantor" ? cantor_product_measure(c.alpha, c.measure_level)
                                            : lattice_cluster({0, 0, 0}, c.measure_radius, c.measure_radius / 4.0);
  if (!mu.unit_ball) throw ConfigError("spherical means need a measure supported in the unit ball");
  double I = energy_I_alpha(mu, c.alpha).value;
  if (!std::isfinite(I)) throw NumericalError("I_alpha estimate is not finite");
  auto Rs = c.R;
  std::sort(Rs.begin(), Rs.end());
  const double sqrtI = std::sqrt(I);
  rec.add_scalar("q", q);
  rec.add_scalar("predicted_rate", rate);
  rec.add_scalar("I_alpha", I);
  rec.add_scalar("mass", mu.total_mass);
  detail::SurfaceCache surfaces(detail::make_height(c.surface));
  double C = 0.0, worst = 0.0;
  bool vacuous = true;
  for (double R : Rs) {
    const auto& S = surfaces.get(detail::resolution_for(c, R, 64));
    double m = spherical_means(S, mu, R, q);
    double rate_term = std::pow(R, -rate) * sqrtI;
    if (C == 0.0) C = m / rate_term;
    double bound = C * std::pow(R, kUpperSlack) * rate_term;
    double trivial = mu.total_mass * std::pow(S.area(), 1.0 / q);
    vacuous = vacuous && rate_term >= trivial;
    worst = std::max(worst, m / bound);
    rec.add_row("mean", R, 0, m);
    rec.add_row("bound", R, 0, bound);
    rec.add_row("trivial", R, 0, trivial);
  }
  rec.add_scalar("C_fitted", C);
  rec.add_fit("mean", 0, -rate, 0, 0, false);
  auto& chk = rec.check_le("mean_over_bound", worst, 1.0);
  if (vacuous) {
    chk.verdict = Verdict::VACUOUS;
    rec.notes.push_back("sqrt(I_alpha) R^{-rate} exceeds the trivial bound at every R: the estimate says nothing here");
  }
  rec.finalize();
  rec.wall_clock_s = timer.seconds();
  return rec;
}

// Random smooth functions on theta caps: reconstruction, frame bound and off-tube decay.
inline RunRecord run_wavepacket_demo(const ExperimentConfig& c) {
  detail::expect_kind(c, {"wavepacket-demo"});
  detail::Timer timer;
  RunRecord rec;
  rec.config = c;
  std::mt19937_64 rng(c.seed);
  detail::SurfaceCache surfaces(detail::make_height(c.surface));
  for (double R : c.R) {
    WavePacketConfig cfg{R, c.delta, c.decay_order};
    try {
      cfg.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    const auto& S = surfaces.get(detail::resolution_for(c, R, 64));
    double worst_res = 0.0, worst_frame = 0.0, worst_off = 0.0;
    int tested = 0;
    std::uniform_real_distribution<double> U(-0.6, 0.6);
    for (int k = 0; k < c.caps; ++k) {
      Vec2 ctr;
      do ctr = {U(rng), U(rng)};
      while (norm(ctr) > 0.6);
      auto cap = theta_cap(S, ctr, R, k);
      auto g = AmplitudeFunction::random_smooth(S, detail::draw_seed(c.seed, k));
      std::vector<cplx> v(S.nodes.size(), 0.0);
      for (int n : cap.nodes) v[n] = detail::bump(norm(S.nodes[n].omega - cap.center) / cap.radius) * g[n];
      AmplitudeFunction f(S, std::move(v));
      auto set = decompose(S, f, cap, cfg);
      const double l2 = f.norms().l2;
      worst_res = std::max(worst_res, set.residual_l1 / set.f_l1);
      worst_frame = std::max(worst_frame, set.packet_l2sq_total / (set.frame_constant * l2 * l2));
      rec.add_row("packets", R, k, static_cast<double>(set.packets.size()));
      rec.add_row("frame_constant", R, k, set.frame_constant);
      std::vector<std::size_t> order(set.packets.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return set.packets[a].l2sq > set.packets[b].l2sq; });
      int used = 0;
      for (std::size_t i : order) {
        if (used == c.packets) break;
        const Tube& T = set.packets[i].tube;
        if (!T.meets_ball(R)) continue;
        std::vector<Vec3> pts;
        for (int tries = 0; tries < 100000 && pts.size() < 40; ++tries) {
          Vec3 x = detail::random_in_ball(rng, R);
          double d = T.distance(x, set.period) / T.radius;
          if (d >= 4.0 && d <= 6.0) pts.push_back(x);
        }
        if (pts.size() < 10) continue;
        worst_off = std::max(worst_off, off_tube_decay(S, set, i, pts));
        ++used;
      }
      tested += used;
    }
    std::string tag = "_R" + detail::format_double(R);
    rec.check_le("residual_over_l1" + tag, worst_res, 1e-6);
    rec.check_le("frame_sum_over_C_l2sq" + tag, worst_frame, 1.05);
    rec.check_le("off_tube_over_l1" + tag, worst_off, 1.0 / (R * R));
    rec.check_ge("off_tube_packets_tested" + tag, tested, c.caps * c.packets);
  }
  rec.finalize();
  rec.wall_clock_s = timer.seconds();
  return rec;
}

namespace detail {

inline std::vector<double> two_bumps(const PartitionGrid& G, double R) {
  return sample_grid(G, [R](const Vec3& x) {
    Vec3 a{-0.4 * R, -0.1 * R, 0.05 * R}, b{0.35 * R, 0.2 * R, -0.1 * R};
    return std::exp(-dot(x - a, x - a) / (2 * std::pow(0.15 * R, 2))) +
           0.7 * std::exp(-dot(x - b, x - b) / (2 * std::pow(0.2 * R, 2)));
  });
}

}  // namespace detail

// Equidistribution on uniform and two-bump masses, random line and tube counts,
// and the broad part of a single-cap function.
inline RunRecord run_partition_demo(const ExperimentConfig& c) {
  detail::expect_kind(c, {"partition-demo"});
  detail::Timer timer;
  RunRecord rec;
  rec.config = c;
  const double R = c.R.front();
  const double wall = std::pow(R, 0.5 + c.delta);
  PartitionGrid G{R, c.grid};
  try {
    G.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  std::vector<std::pair<std::string, std::vector<double>>> masses{
      {"uniform", sample_grid(G, [](const Vec3&) { return 1.0; })}, {"two_bumps", detail::two_bumps(G, R)}};
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> U(-R, R), Ut(-0.8 * R, 0.8 * R);
  for (int D : c.D) {
    for (const auto& [name, F] : masses) {
      auto P = equidistribute(G, F, D, {c.grid, 8, c.seed, wall, 15});
      std::string tag = name + "_D" + std::to_string(D);
      rec.check_le("mass_ratio_" + tag, P.mass_ratio, 2.0);
      rec.check_le("fallback_" + tag, P.used_fallback ? 1.0 : 0.0, 0.0);
      rec.add_row("cells_" + name, D, 0, P.cell_count);
      int line_max = 0, tube_max = 0;
      for (int i = 0; i < c.lines; ++i) {
        auto x = line_cell_crossings(P, {{U(rng), U(rng), U(rng)}, detail::random_unit(rng)});
        line_max = std::max({line_max, x.cells, x.intervals});
      }
      for (int i = 0; i < c.tubes; ++i) {
        Tube T;
        T.point = {Ut(rng), Ut(rng), Ut(rng)};
        T.direction = detail::random_unit(rng);
        T.radius = wall;
        T.half_length = R;
        tube_max = std::max(tube_max, static_cast<int>(tube_cell_membership(P, T).size()));
      }
      rec.check_le("line_cells_" + tag, line_max, D + 1);
      rec.check_le("tube_cells_" + tag, tube_max, D + 1);
    }
  }
  // Broad part of a function living in one tau cap.
  auto S = build_surface(detail::make_height(c.surface), 48);
  auto cover = cap_cover(S, CapScale::tau, c.K);
  const auto& cap = cover.caps[cover.caps.size() / 2];
  std::vector<cplx> v(S.nodes.size(), 0.0);
  for (std::size_t k = 0; k < v.size(); ++k)
    if (cover.owner[k] == cap.id) v[k] = 1.0;
  AmplitudeFunction f(S, std::move(v));
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      for (int k = 0; k < 10; ++k) pts.push_back({-20.0 + 40.0 * i / 9, -20.0 + 40.0 * j / 9, -20.0 + 40.0 * k / 9});
  double broad_max = 0.0;
  for (double beta : {0.1, 0.5, 1.0}) {
    auto B = broad_part(S, f, cover, beta, pts);
    for (double b : B.broad) broad_max = std::max(broad_max, b);
  }
  rec.check_le("single_cap_broad_max", broad_max, 0.0);
  rec.finalize();
  rec.wall_clock_s = timer.seconds();
  return rec;
}

// Node count and area of the discretized surface.
inline RunRecord run_surface_summary(const ExperimentConfig& c) {
  detail::expect_kind(c, {"surface"});
  RunRecord rec;
  rec.config = c;
  const auto h = detail::make_height(c.surface);
  for (double R : c.R) {
    int res = detail::resolution_for(c, R, 8);
    auto S = build_surface(h, res);
    rec.add_row("nodes", res, 0, static_cast<double>(S.nodes.size()));
    rec.add_row("area", res, 0, S.area());
    if (h.paraboloid) {
      double exact = two_pi * (2.0 * std::sqrt(2.0) - 1.0) / 3.0;
      // Midpoint quadrature over clipped cells: error O(h^2).
      rec.check_le("area_relative_error_res" + std::to_string(res), std::abs(S.area() - exact) / exact,
                   S.spacing * S.spacing);
    }
  }
  rec.finalize();
  return rec;
}

// Dyadic A_alpha scan of the configured weight.
inline RunRecord run_weight_scan(const ExperimentConfig& c) {
  detail::expect_kind(c, {"weights"});
  RunRecord rec;
  rec.config = c;
  auto H = detail::config_weight(c, c.weight);
  const double alpha = c.find("params.alpha") ? c.alpha : H->claimed_dimension();
  rec.add_scalar("claimed_dimension", H->claimed_dimension());
  auto rep = estimate_A_alpha(*H, alpha, c.scan);
  rec.add_scalar("A_alpha_scan", rep.value);
  rec.add_scalar("argmax_radius", rep.argmax_radius);
  rec.add_scalar("centers_scanned", static_cast<double>(rep.centers_scanned));
  rec.check_le("A_alpha_scan_finite", std::isfinite(rep.value) ? 0.0 : 1.0, 0.0);
  rec.notes.push_back("A_alpha is a lower bound from a finite scan");
  rec.finalize();
  return rec;
}

// Dimension functionals of the configured measure.
inline RunRecord run_measure_summary(const ExperimentConfig& c) {
  detail::expect_kind(c, {"measure"});
  RunRecord rec;
  rec.config = c;
  FractalMeasure mu = c.measure == "cantor" ? cantor_product_measure(c.alpha, c.measure_level)
                                            : lattice_cluster({0, 0, 0}, c.measure_radius, c.measure_radius / 4.0);
  rec.add_scalar("atoms", static_cast<double>(mu.atoms.size()));
  rec.add_scalar("mass", mu.total_mass);
  rec.add_scalar("support_radius", mu.support_radius);
  double C = estimate_C_alpha(mu, c.alpha).value;
  double I = energy_I_alpha(mu, c.alpha).value;
  rec.add_scalar("C_alpha_scan", C);
  rec.add_scalar("I_alpha", I);
  rec.check_le("I_alpha_finite", std::isfinite(I) ? 0.0 : 1.0, 0.0);
  rec.finalize();
  return rec;
}

// Exponent table plus the parabolic-map algebra on random caps.
inline RunRecord run_scaling_checks(const ExperimentConfig& c) {
  detail::expect_kind(c, {"scaling"});
  RunRecord rec;
  rec.config = c;
  const auto t = detail::config_exponents(c);
  rec.add_scalar("p", t.p);
  rec.add_scalar("p0", t.p0);
  rec.add_scalar("p0_dual", t.p0_dual);
  rec.add_scalar("decay_rate", t.decay_rate);
  if (t.part_ii) rec.add_scalar("decay_rate_l2", t.decay_rate_l2);
  rec.add_scalar("expsum_exponent", t.expsum_exponent());
  if (t.p_exact) rec.notes.push_back("exact: p = " + t.p_exact->str() + ", p0 = " + t.p0_exact->str() + ", p0' = " +
                                     t.p0_dual_exact->str());
  const auto h = detail::make_height(c.surface);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> U(-0.7, 0.7), Ur(0.01, 1.0);
  double eig = 0.0, prod = 0.0;
  for (int k = 0; k < c.checks; ++k) {
    double r = Ur(rng);
    auto m = parabolic_map(h, {U(rng), U(rng)}, r);
    eig = std::max(eig, m.eigen_mismatch());
    double r6 = std::pow(r, 6.0);
    prod = std::max(prod, std::abs(m.lambda[1] * m.lambda[2] - r6) / r6);
  }
  rec.check_le("eigenvalue_mismatch", eig, 1e-10);
  rec.check_le("lambda2_lambda3_relative", prod, 1e-12);
  rec.finalize();
  return rec;
}

inline RunRecord run_experiment(const ExperimentConfig& c) {
  if (c.kind == "weighted-scaling") return run_weighted_scaling(c);
  if (c.kind == "trace") return run_trace_inequality(c);
  if (c.kind == "expsum-sharpness") return run_expsum_sharpness(c);
  if (c.kind == "spherical-means") return run_spherical_means(c);
  if (c.kind == "wavepacket-demo") return run_wavepacket_demo(c);
  if (c.kind == "partition-demo") return run_partition_demo(c);
  if (c.kind == "surface") return run_surface_summary(c);
  if (c.kind == "weights") return run_weight_scan(c);
  if (c.kind == "measure") return run_measure_summary(c);
  if (c.kind == "scaling") return run_scaling_checks(c);
  throw ConfigError("unknown experiment kind '" + c.kind + "'");
}

// ---------------------------------------------------------------- output

inline nlohmann::ordered_json to_json(const RunRecord& r) {
  using nlohmann::ordered_json;
  auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(detail::format_double(v)); };
  ordered_json j;
  ordered_json cfg;
  cfg["kind"] = r.config.kind;
  cfg["hash"] = r.config.hash_hex();
  ordered_json entries = ordered_json::object();
  for (const auto& e : r.config.entries) entries[e.key] = e.value;
  cfg["entries"] = entries;
  ordered_json resolved;
  resolved["alpha"] = r.config.alpha_text;
  resolved["R"] = r.config.R;
  resolved["seed"] = r.config.seed;
  resolved["draws"] = r.config.draws;
  resolved["surface"] = r.config.surface;
  resolved["resolution"] = r.config.resolution;
  resolved["resolution_factor"] = r.config.resolution_factor;
  cfg["resolved"] = resolved;
  j["config"] = cfg;
  j["verdict"] = to_string(r.verdict);
  ordered_json checks = ordered_json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name}, {"value", num(c.value)}, {"relation", c.relation}, {"bound", num(c.bound)},
                      {"verdict", to_string(c.verdict)}});
  j["checks"] = checks;
  ordered_json fits = ordered_json::array();
  for (const auto& f : r.fits) {
    ordered_json o{{"series", f.series}, {"draw", f.draw}};
    if (f.rejected) {
      o["rejected"] = true;
      o["message"] = f.message;
    } else {
      o["slope"] = f.slope;
      o["intercept"] = f.intercept;
      o["residual"] = f.residual;
    }
    o["predicted"] = f.predicted;
    o["window"] = {num(f.lo), num(f.hi)};
    o["verdict"] = f.judged ? ordered_json(to_string(f.verdict)) : ordered_json(nullptr);
    fits.push_back(o);
  }
  j["fits"] = fits;
  ordered_json scalars = ordered_json::object();
  for (const auto& [k, v] : r.scalars) scalars[k] = num(v);
  j["scalars"] = scalars;
  ordered_json rows = ordered_json::array();
  for (const auto& w : r.rows) rows.push_back({{"series", w.series}, {"R", w.R}, {"draw", w.draw}, {"value", num(w.value)}});
  j["rows"] = rows;
  j["notes"] = r.notes;
  return j;
}

// Comment line with the config hash, header row, then one row per measurement
// with the fitted model value where a fit exists.
inline std::string to_csv(const RunRecord& r) {
  std::ostringstream os;
  os << "# config_hash=" << r.config.hash_hex() << " kind=" << r.config.kind << " verdict=" << to_string(r.verdict) << "\n";
  os << "series,R,draw,value,model\n";
  for (const auto& w : r.rows) {
    os << w.series << "," << detail::format_double(w.R) << "," << w.draw << "," << detail::format_double(w.value) << ",";
    for (const auto& f : r.fits)
      if (f.series == w.series && f.draw == w.draw && !f.rejected) {
        os << detail::format_double(f.model(w.R));
        break;
      }
    os << "\n";
  }
  return os.str();
}

inline std::vector<std::string> write_outputs(const RunRecord& r, const std::string& dir, const std::string& name,
                                              bool json, bool csv) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> out;
  auto write = [&](const std::string& ext, const std::string& text) {
    auto path = (std::filesystem::path(dir) / (name + ext)).string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ResourceError("cannot write '" + path + "'");
    f << text;
    out.push_back(path);
  };
  if (json) write(".json", to_json(r).dump(2) + "\n");
  if (csv) write(".csv", to_csv(r));
  return out;
}

}  // namespace rlab
