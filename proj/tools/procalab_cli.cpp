// Scenario-driven batch runner: builds meshes, grids, states and Moller
// chains from a JSON scenario and executes named verification suites.
//
// Exit codes: 0 all checks pass, 1 at least one check failed (the report is
// still written), 2 malformed scenario or arguments.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "procalab/scenario.hpp"

namespace {

std::vector<std::string> split_suites(const std::string& arg) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : arg) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int run_command(const std::string& scenario_path, const std::string& out_path,
                const std::string& suites_arg, std::optional<std::uint64_t> seed,
                std::optional<double> tol_scale) {
  procalab::Scenario sc = procalab::load_scenario(scenario_path);
  procalab::RunOverrides ov;
  if (!suites_arg.empty()) ov.suites = split_suites(suites_arg);
  ov.seed = seed;
  ov.tolerance_scale = tol_scale;
  const procalab::RunResult res = procalab::run_scenario(sc, ov);
  if (!out_path.empty()) procalab::write_report(res.report, out_path);
  for (const auto& check : res.report.at("checks")) {
    std::printf("%-6s %-36s residual %.3e  threshold %.3e\n",
                check.at("pass").get<bool>() ? "pass" : "FAIL",
                check.at("id").get<std::string>().c_str(), check.at("residual").get<double>(),
                check.at("threshold").get<double>());
  }
  return res.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discrete constrained-field verification laboratory"};
  app.require_subcommand(1);

  std::string scenario_path, out_path, suites_arg, artifact, spectra_out;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_scale;

  CLI::App* run = app.add_subcommand("run", "run verification suites from a scenario");
  run->add_option("--scenario", scenario_path, "scenario JSON path")->required();
  run->add_option("--out", out_path, "report JSON output path");
  run->add_option("--suite", suites_arg, "comma-separated suite list");
  run->add_option("--seed", seed, "random battery seed");
  run->add_option("--tolerance-scale", tol_scale, "multiply every threshold");

  CLI::App* dump = app.add_subcommand("dump", "emit a CSV artifact");
  dump->add_option("--artifact", artifact, "spectrum | impulse | frequency | trace")->required();
  dump->add_option("--scenario", scenario_path, "scenario JSON path")->required();
  dump->add_option("--out", out_path, "CSV output path")->required();
  dump->add_option("--seed", seed, "seed for trace data");

  CLI::App* mv = app.add_subcommand("moller-verify", "run the Moller suite only");
  mv->add_option("--scenario", scenario_path, "scenario JSON path")->required();
  mv->add_option("--out", out_path, "report JSON output path");
  mv->add_option("--seed", seed, "random battery seed");
  mv->add_option("--tolerance-scale", tol_scale, "multiply every threshold");

  CLI::App* sv = app.add_subcommand("state-verify", "run the states suite only");
  sv->add_option("--scenario", scenario_path, "scenario JSON path")->required();
  sv->add_option("--out", out_path, "report JSON output path");
  sv->add_option("--spectra-out", spectra_out, "CSV path for the frequency spectrum");
  sv->add_option("--seed", seed, "random battery seed");
  sv->add_option("--tolerance-scale", tol_scale, "multiply every threshold");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(scenario_path, out_path, suites_arg, seed, tol_scale);
    if (mv->parsed()) return run_command(scenario_path, out_path, "moller", seed, tol_scale);
    if (sv->parsed()) {
      const int code = run_command(scenario_path, out_path, "states", seed, tol_scale);
      if (!spectra_out.empty()) {
        const procalab::Scenario sc = procalab::load_scenario(scenario_path);
        procalab::dump_frequency(sc, spectra_out);
      }
      return code;
    }
    if (dump->parsed()) {
      const procalab::Scenario sc = procalab::load_scenario(scenario_path);
      if (artifact == "spectrum") {
        procalab::dump_spectrum(sc, out_path);
      } else if (artifact == "impulse") {
        procalab::dump_impulse(sc, out_path);
      } else if (artifact == "frequency") {
        procalab::dump_frequency(sc, out_path);
      } else if (artifact == "trace") {
        procalab::dump_cauchy_trace(sc, seed.value_or(sc.seed), out_path);
      } else {
        std::cerr << "unknown artifact kind: " << artifact << "\n";
        return 2;
      }
      return 0;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 2;
}
