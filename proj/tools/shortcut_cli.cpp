// Command-line front end for the shortcut regularization harness.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "shortcut/harness.hpp"
#include "shortcut/verify.hpp"

namespace fs = std::filesystem;
using namespace shortcut;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerifyFailed = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv,json,svg";
};

void add_common(CLI::App* sub, CommonOptions& o, bool needs_config = true) {
  auto* opt = sub->add_option("--config", o.config, "scenario JSON file");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "override the base seed");
  sub->add_option("--out", o.out, "output directory (default: the config's 'outputs')");
  sub->add_option("--format", o.format, "comma list of csv,json,svg")->capture_default_str();
}

ExperimentConfig load(const CommonOptions& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.base_seed = *o.seed;
  if (!o.out.empty()) cfg.outputs = o.out;
  return cfg;
}

void print_written(const fs::path& dir, const std::vector<std::string>& files) {
  for (const auto& f : files) std::cout << (dir / f).string() << '\n';
}

void print_summary(const ExperimentResult& res) {
  std::size_t failed = 0;
  for (const auto& r : res.rows) failed += r.status != "ok";
  std::cerr << res.operation << ": " << res.rows.size() << " rows, " << failed << " failed\n";
  for (const auto& a : res.aggregates) {
    if (a.metric != "test_mse" && a.metric != "shortcut_te" && a.metric != "abs_beta_s") continue;
    std::cerr << "  " << a.regularizer << " lambda=" << format_double(a.lambda);
    if (!std::isnan(a.delta_u)) std::cerr << " delta_u=" << format_double(a.delta_u);
    std::cerr << ' ' << a.metric << '=' << a.mean << " (se " << a.se << ")\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shortcut-mitigation regularizers: fits, sweeps and numerical checks"};
  app.require_subcommand(1);

  CommonOptions gen_o, fit_o, lam_o, corr_o, nl_o, ver_o, rep_o;
  auto* gen = app.add_subcommand("gen", "write train/test CSV for the config's dataset");
  add_common(gen, gen_o);
  auto* fit = app.add_subcommand("fit", "fit every regularizer over all repeats");
  add_common(fit, fit_o);
  auto* lam = app.add_subcommand("sweep-lambda", "sweep the regularization strength");
  add_common(lam, lam_o);
  auto* corr = app.add_subcommand("sweep-corr", "sweep the U loading of the shortcut");
  add_common(corr, corr_o);
  auto* nl = app.add_subcommand("nonlinear", "train the MLP variant with first-layer penalties");
  add_common(nl, nl_o);
  auto* ver = app.add_subcommand("verify", "numerical checks of the shrinkage and elimination results");
  add_common(ver, ver_o);
  auto* rep = app.add_subcommand("report", "re-render a results directory");
  std::string rep_input;
  bool rep_log_x = false;
  rep->add_option("--input", rep_input, "directory holding results.csv")->required()->check(CLI::ExistingDirectory);
  rep->add_flag("--log-x", rep_log_x, "log-scale x axis for lambda sweeps");
  add_common(rep, rep_o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = load(gen_o);
      DatasetSpec spec = cfg.dataset;
      if (gen_o.seed) spec.seed = *gen_o.seed;
      const fs::path dir = cfg.outputs;
      print_written(dir, generate_files(spec, dir));
      return kExitOk;
    }
    if (fit->parsed() || lam->parsed() || corr->parsed() || nl->parsed()) {
      const CommonOptions& o = fit->parsed() ? fit_o : lam->parsed() ? lam_o : corr->parsed() ? corr_o : nl_o;
      const ReportFormats formats = parse_formats(o.format);
      const ExperimentConfig cfg = load(o);
      ExperimentResult res = fit->parsed()   ? run_experiment(cfg)
                             : lam->parsed() ? sweep_lambda(cfg)
                             : corr->parsed() ? sweep_correlation(cfg)
                                              : run_nonlinear(cfg);
      print_summary(res);
      const fs::path dir = cfg.outputs;
      print_written(dir, emit_report(res, formats, dir));
      return kExitOk;
    }
    if (ver->parsed()) {
      const fs::path cfg_path = ver_o.config;
      VerifyConfig cfg = verify_config_from_json(read_json_file(ver_o.config), cfg_path.parent_path());
      if (ver_o.seed) cfg.base_seed = *ver_o.seed;
      const VerifyReport report = verify(cfg);
      const fs::path dir = ver_o.out.empty() ? fs::path("results") / cfg.scenario : fs::path(ver_o.out);
      fs::create_directories(dir);
      write_text((dir / "verify.json").string(), report.to_json().dump(2) + "\n");
      for (const auto& p : report.properties) {
        std::cerr << (p.pass ? "pass " : "FAIL ") << (p.hard ? "[hard] " : "[soft] ") << p.name << ' '
                  << p.metrics.dump() << '\n';
      }
      std::cout << (dir / "verify.json").string() << '\n';
      return report.pass() ? kExitOk : kExitVerifyFailed;
    }
    if (rep->parsed()) {
      const ReportFormats formats = parse_formats(rep_o.format);
      const fs::path out = rep_o.out.empty() ? fs::path(rep_input) : fs::path(rep_o.out);
      print_written(out, rerender_report(rep_input, formats, out, rep_log_x));
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
