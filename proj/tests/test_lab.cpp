#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "rlab/lab.hpp"

using namespace rlab;
using Catch::Approx;

namespace {

const char* kIni = R"(; comment line
[experiment]
kind = expsum-sharpness
seed = 7

[params]
alpha = 3/2
R = 8, 16, 32

[measure]
level = 5
)";

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config parsing", "[lab]") {
  auto c = parse_config_text(kIni);
  CHECK(c.kind == "expsum-sharpness");
  CHECK(c.seed == 7);
  CHECK(c.alpha == 1.5);
  CHECK(c.alpha_exact() == Rational(3, 2));
  CHECK(c.R == std::vector<double>{8, 16, 32});
  CHECK(c.measure_level == 5);
  CHECK(c.out_name == "expsum-sharpness");
  REQUIRE(c.entries.size() == 5);
  CHECK(c.entries[2].key == "params.alpha");
  CHECK(c.entries[2].value == "3/2");
  CHECK(c.entries[3].value == "8, 16, 32");

  SECTION("hash follows the verbatim entries") {
    CHECK(c.hash() == parse_config_text(kIni).hash());
    CHECK(c.hash_hex().size() == 16);
    auto d = with_entry(c, "experiment.seed", "8");
    CHECK(d.seed == 8);
    CHECK(d.hash() != c.hash());
    CHECK(with_entry(d, "experiment.seed", "7").hash() == c.hash());
    // FNV-1a of the empty string is the offset basis.
    CHECK(detail::fnv1a("") == 14695981039346656037ULL);
    CHECK(detail::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  }
  SECTION("overrides append new keys") {
    auto d = with_entry(c, "params.p", "22/7");
    CHECK(d.p == Approx(22.0 / 7.0).epsilon(1e-15));
    CHECK(d.entries.back().key == "params.p");
  }
  SECTION("errors") {
    CHECK_THROWS_AS(parse_config_text("[experiment]\nkind = nope\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[params]\nalpha = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[experiment]\nkind = scaling\n[params]\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("kind = scaling\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[experiment]\nkind = scaling\n[params]\nalpha = x\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[experiment]\nkind = scaling\n[params]\nR = 4 4 8\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[experiment]\nkind = scaling\n[params]\nR = 0.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[experiment\nkind = scaling\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[experiment]\nkind = scaling\nkind = trace\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_file("/nonexistent/config.ini"), ConfigError);
  }
  SECTION("every kind has a default config") {
    for (const auto& k : experiment_kinds()) CHECK(default_config(k).kind == k);
  }
}

TEST_CASE("record verdicts", "[lab]") {
  RunRecord r;
  r.check_le("a", 1.0, 2.0);
  r.finalize();
  CHECK(r.verdict == Verdict::PASS);
  r.check_le("b", 3.0, 2.0).verdict = Verdict::VACUOUS;
  r.finalize();
  CHECK(r.verdict == Verdict::VACUOUS);
  r.check_ge("c", 1.0, 2.0);
  r.finalize();
  CHECK(r.verdict == Verdict::FAIL);
  CHECK_THROWS_AS(r.scalar("missing"), InvalidArgument);

  SECTION("fits over rows, with model values") {
    RunRecord s;
    for (double R : {2.0, 4.0, 8.0}) s.add_row("x", R, 0, 3.0 * R * R);
    auto& f = s.add_fit("x", 0, 2.0, 1.75, 2.25);
    CHECK(f.slope == Approx(2.0).epsilon(1e-12));
    CHECK(f.model(4.0) == Approx(48.0).epsilon(1e-12));
    CHECK(f.verdict == Verdict::PASS);
    s.add_row("zero", 2, 0, 0.0);
    s.add_row("zero", 4, 0, 0.0);
    s.add_row("zero", 8, 0, 0.0);
    auto& z = s.add_fit("zero", 0, 0.0, -1, 1);
    CHECK(z.rejected);
    CHECK(z.verdict == Verdict::FAIL);
    auto csv = to_csv(s);
    auto at = csv.find("x,4,0,48,");
    REQUIRE(at != std::string::npos);
    CHECK(std::stod(csv.substr(at + 9)) == Approx(48.0).epsilon(1e-12));
    CHECK(csv.find("zero,4,0,0,\n") != std::string::npos);
  }
}

TEST_CASE("exponential-sum driver", "[lab]") {
  auto c = parse_config_text(kIni);
  SECTION("runs are byte-identical and carry the config") {
    auto a = run_experiment(c), b = run_experiment(c);
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK(to_csv(a) == to_csv(b));
    auto j = to_json(a);
    CHECK(j["config"]["entries"]["params.R"] == "8, 16, 32");
    CHECK(j["config"]["hash"] == c.hash_hex());
    CHECK(to_csv(a).rfind("# config_hash=" + c.hash_hex(), 0) == 0);
    // The prediction comes from the exponent table.
    CHECK(a.scalar("predicted_exponent") == exponents(1.5).expsum_exponent());
    CHECK(a.fits.front().predicted == 4.5);

    auto dir = (std::filesystem::temp_directory_path() / "rlab_lab_test").string();
    std::filesystem::remove_all(dir);
    auto paths = write_outputs(a, dir, "run", true, true);
    REQUIRE(paths.size() == 2);
    CHECK(slurp(paths[0]) == to_json(a).dump(2) + "\n");
    CHECK(slurp(paths[1]) == to_csv(a));
    std::filesystem::remove_all(dir);
  }
  SECTION("full integral against a direct sum at R = 8") {
    auto r = run_experiment(c);
    auto mu = cantor_product_measure(1.5, 5);
    auto F = r_separated_caps(HeightSpec::paraboloid_spec(), 8.0);
    double direct = 0.0;
    for (const auto& at : mu.atoms) {
      cplx s = 0.0;
      for (const auto& w : F.w) s += expi2pi(8.0 * dot(w, at.x));
      direct += at.m * std::pow(std::abs(s), 3.0);
    }
    double v = 0.0;
    for (const auto& row : r.rows)
      if (row.series == "full" && row.R == 8.0) v = row.value;
    CHECK(v == Approx(direct).epsilon(1e-9));
  }
  SECTION("one frequency gives the total mass and slope 0") {
    auto r = run_experiment(with_entry(c, "params.N", "1"));
    for (const auto& row : r.rows)
      if (row.series == "full") CHECK(row.value == Approx(1.0).epsilon(1e-12));
    REQUIRE(r.fits.size() == 1);
    CHECK(std::abs(r.fits[0].slope) < 1e-10);
    CHECK(r.verdict == Verdict::PASS);
  }
  SECTION("measure level too coarse for R_max") {
    CHECK_THROWS_AS(run_experiment(with_entry(c, "measure.level", "2")), ConfigError);
  }
}

TEST_CASE("weighted-scaling driver", "[lab]") {
  auto base = make_config({{"experiment.kind", "weighted-scaling"},
                           {"experiment.draws", "1"},
                           {"params.R", "4 8 16"},
                           {"params.f", "smooth"}});
  SECTION("Q at R = 4 against an independent quadrature") {
    auto r = run_experiment(base);
    auto S = build_surface(HeightSpec::paraboloid_spec(), 16);
    auto f = lambda_class_normalize(S, AmplitudeFunction::random_smooth(S, detail::draw_seed(1, 0)), 4.0, 1.0);
    ExtensionEvaluator E(S, f, false);
    auto H = Weight::omega1();
    double lhs = 0.0;
    for (const auto& x : ball_lattice(4.0, 0.5)) lhs += std::pow(std::abs(E(x)), 3.0) * H->cell_average(x, 0.5) * 0.125;
    double A = estimate_A_alpha(*H, 1.5, base.scan).value;
    double expect = lhs / (std::max(A, std::pow(A, 0.25)) * std::pow(f.norms().l2, 3.0));
    CHECK(r.rows.front().R == 4.0);
    CHECK(r.rows.front().value == Approx(expect).epsilon(1e-9));
    CHECK(r.scalar("predicted_exponent") == 0.0);
    CHECK(r.fits.front().hi == kScalingWindow);
  }
  SECTION("part ii predicts the table's growth") {
    auto r = run_experiment(with_entry(base, "params.part", "ii"));
    CHECK(r.scalar("predicted_exponent") == exponents(1.5).part_ii_growth);
    CHECK_THROWS_AS(run_experiment(make_config({{"experiment.kind", "weighted-scaling"},
                                                {"params.alpha", "2"},
                                                {"weight.kind", "omega2"},
                                                {"params.part", "ii"}})),
                    ConfigError);
  }
  SECTION("zero weight: all values vanish and the fit is rejected") {
    auto r = run_experiment(with_entry(base, "weight.kind", "zero"));
    for (const auto& row : r.rows) CHECK(row.value == 0.0);
    REQUIRE(r.fits.size() == 1);
    CHECK(r.fits[0].rejected);
    CHECK(r.fits[0].message.find("identically zero") != std::string::npos);
    CHECK(r.verdict == Verdict::FAIL);
  }
  SECTION("weight dimension must match alpha") {
    CHECK_THROWS_AS(run_experiment(with_entry(base, "weight.kind", "omega2")), ConfigError);
  }
}

TEST_CASE("trace driver", "[lab]") {
  auto c = make_config({{"experiment.kind", "trace"},
                        {"experiment.draws", "2"},
                        {"params.R", "4 8"},
                        {"weight.list", "one omega2"}});
  auto r = run_experiment(c);
  double best = 0.0;
  for (const auto& row : r.rows)
    if (row.R == 4.0) best = std::max(best, row.value);
  CHECK(r.scalar("C_fitted") == best);
  CHECK(r.checks.size() == 2);
  CHECK(r.verdict == Verdict::PASS);
}

TEST_CASE("spherical-means driver", "[lab]") {
  SECTION("mollified point mass does not decay and is vacuous") {
    auto c = make_config({{"experiment.kind", "spherical-means"}, {"params.R", "8 16 32"}, {"measure.kind", "point"}});
    auto r = run_experiment(c);
    REQUIRE(r.fits.size() == 1);
    CHECK(std::abs(r.fits[0].slope) < 0.05);
    CHECK(r.verdict == Verdict::VACUOUS);
    CHECK(r.check("mean_over_bound").verdict == Verdict::VACUOUS);
  }
  SECTION("q = p0 at alpha = 3/2 uses alpha/p, equal to alpha/4 + 1/8") {
    auto c = make_config({{"experiment.kind", "spherical-means"}, {"params.R", "8 16 32"}, {"params.q", "p0"}});
    auto r = run_experiment(c);
    CHECK(r.scalar("q") == 2.0);
    CHECK(r.scalar("predicted_rate") == 0.5);
    CHECK(1.5 / 3.0 == 1.5 / 4.0 + 1.0 / 8.0);
    CHECK(r.verdict == Verdict::PASS);
    CHECK(r.fits[0].predicted == -0.5);
  }
  SECTION("q outside the admissible set") {
    auto c = make_config({{"experiment.kind", "spherical-means"}, {"params.q", "3"}});
    CHECK_THROWS_AS(run_experiment(c), ConfigError);
  }
}

TEST_CASE("demo drivers", "[lab]") {
  SECTION("partition") {
    auto c = make_config({{"experiment.kind", "partition-demo"},
                          {"params.D", "1 2"},
                          {"params.grid", "32"},
                          {"params.lines", "20"},
                          {"params.tubes", "10"}});
    auto r = run_experiment(c);
    CHECK(r.verdict == Verdict::PASS);
    CHECK(r.check("single_cap_broad_max").value == 0.0);
    CHECK(r.check("line_cells_two_bumps_D2").bound == 3.0);
  }
  SECTION("wave packets") {
    auto c = make_config({{"experiment.kind", "wavepacket-demo"}, {"params.caps", "1"}, {"params.packets", "4"}});
    auto r = run_experiment(c);
    CHECK(r.verdict == Verdict::PASS);
    CHECK(r.check("residual_over_l1_R256").value <= 1e-6);
    CHECK_THROWS_AS(run_experiment(with_entry(c, "params.R", "100")), ConfigError);
  }
  SECTION("surface, weights, measure and scaling") {
    auto s = run_experiment(make_config({{"experiment.kind", "surface"}, {"params.R", "64 128"}}));
    CHECK(s.verdict == Verdict::PASS);
    CHECK(s.rows.size() == 4);
    auto w = run_experiment(make_config({{"experiment.kind", "weights"}, {"weight.kind", "omega2"}}));
    CHECK(w.scalar("claimed_dimension") == 2.0);
    CHECK(w.scalar("A_alpha_scan") > 0.0);
    auto m = run_experiment(make_config({{"experiment.kind", "measure"}, {"measure.level", "4"}}));
    CHECK(m.scalar("atoms") == 4096.0);
    CHECK(m.scalar("mass") == Approx(1.0).epsilon(1e-12));
    auto t = run_experiment(make_config({{"experiment.kind", "scaling"}, {"params.alpha", "2"}}));
    CHECK(t.scalar("p") == Approx(22.0 / 7.0).epsilon(1e-15));
    CHECK(t.notes.front().find("p0' = 44/21") != std::string::npos);
    CHECK(t.verdict == Verdict::PASS);
  }
  SECTION("drivers reject a mismatched kind") {
    CHECK_THROWS_AS(run_wavepacket_demo(default_config("scaling")), ConfigError);
  }
}

TEST_CASE("shipped configs parse", "[lab]") {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(RLAB_CONFIG_DIR)) {
    if (e.path().extension() != ".ini") continue;
    INFO(e.path().string());
    auto c = parse_config_file(e.path().string());
    CHECK(std::find(experiment_kinds().begin(), experiment_kinds().end(), c.kind) != experiment_kinds().end());
    ++n;
  }
  CHECK(n >= 9);
}
