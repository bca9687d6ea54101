#include <CLI11.hpp>
#include <iostream>
#include <map>

#include "rlab/lab.hpp"

namespace {

struct Command {
  const char* name;
  const char* help;
  std::vector<std::string> kinds;  // first is the default
};

const std::vector<Command>& commands() {
  static const std::vector<Command> c{
      {"surface", "discretized surface summary", {"surface"}},
      {"weights", "A_alpha scan of a weight", {"weights"}},
      {"measure", "dimension functionals of a measure", {"measure"}},
      {"ext", "weighted extension estimates (weighted-scaling or trace)", {"weighted-scaling", "trace"}},
      {"expsum", "exponential-sum sharpness", {"expsum-sharpness"}},
      {"sphmeans", "spherical means decay", {"spherical-means"}},
      {"wavepacket", "wave packet decomposition demo", {"wavepacket-demo"}},
      {"partition", "polynomial partitioning demo", {"partition-demo"}},
      {"scaling", "exponent table and parabolic rescaling algebra", {"scaling"}},
  };
  return c;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool csv = false, json = false;
  std::vector<std::string> sets;
};

rlab::ExperimentConfig load(const Command& cmd, const Options& o) {
  auto c = o.config.empty() ? rlab::default_config(cmd.kinds.front()) : rlab::parse_config_file(o.config);
  if (std::find(cmd.kinds.begin(), cmd.kinds.end(), c.kind) == cmd.kinds.end())
    throw rlab::ConfigError("subcommand '" + std::string(cmd.name) + "' cannot run experiment kind '" + c.kind + "'");
  for (const auto& s : o.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw rlab::ConfigError("--set expects key=value, got '" + s + "'");
    c = rlab::with_entry(c, s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) c = rlab::with_entry(c, "experiment.seed", std::to_string(*o.seed));
  if (!o.out_dir.empty()) c = rlab::with_entry(c, "output.dir", o.out_dir);
  return c;
}

int run(const Command& cmd, const Options& o) {
  auto c = load(cmd, o);
  auto rec = rlab::run_experiment(c);
  bool json = o.json || (!o.csv && (c.format == "json" || c.format == "both"));
  bool csv = o.csv || (!o.json && (c.format == "csv" || c.format == "both"));
  for (const auto& path : rlab::write_outputs(rec, c.out_dir, c.out_name, json, csv)) std::cout << "wrote " << path << "\n";
  for (const auto& ch : rec.checks)
    std::cout << rlab::to_string(ch.verdict) << "  " << ch.name << ": " << rlab::detail::format_double(ch.value) << " "
              << ch.relation << " " << rlab::detail::format_double(ch.bound) << "\n";
  for (const auto& f : rec.fits) {
    std::cout << (f.judged ? rlab::to_string(f.verdict) : "INFO") << "  fit " << f.series << " draw " << f.draw << ": ";
    if (f.rejected)
      std::cout << f.message;
    else
      std::cout << "slope " << rlab::detail::format_double(f.slope) << ", predicted " << rlab::detail::format_double(f.predicted);
    std::cout << "\n";
  }
  for (const auto& n : rec.notes) std::cout << "note: " << n << "\n";
  std::cout << "verdict " << rlab::to_string(rec.verdict) << "\n";
  std::cerr << "wall clock " << rec.wall_clock_s << " s\n";
  return rec.verdict == rlab::Verdict::FAIL ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"restriction-estimate experiment lab"};
  app.require_subcommand(1);
  Options opt;
  std::map<std::string, CLI::App*> subs;
  for (const auto& cmd : commands()) {
    auto* s = app.add_subcommand(cmd.name, cmd.help);
    s->add_option("--config", opt.config, "INI experiment config")->check(CLI::ExistingFile);
    s->add_option("--seed", opt.seed, "override experiment.seed");
    s->add_option("--out-dir", opt.out_dir, "override output.dir");
    s->add_option("--set", opt.sets, "override any config key: section.key=value");
    s->add_flag("--csv", opt.csv, "write CSV");
    s->add_flag("--json", opt.json, "write JSON");
    subs[cmd.name] = s;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  for (const auto& cmd : commands()) {
    if (!subs[cmd.name]->parsed()) continue;
    try {
      return run(cmd, opt);
    } catch (const rlab::InvalidArgument& e) {
      std::cerr << "configuration error: " << e.what() << "\n";
      return 2;
    } catch (const rlab::ResourceError& e) {
      std::cerr << "configuration error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}
