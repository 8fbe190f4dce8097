// flrwsim: run / converge / accept driver.
//
// exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 acceptance failure

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flrw/acceptance.hpp"
#include "flrw/flrw.hpp"

namespace {

constexpr int kOk = 0, kConfigError = 2, kNumericalFailure = 3, kAcceptanceFailure = 4;

struct Overrides {
  std::string output_dir;
  long long seed = -1;
  std::vector<double> snapshot_times;
};

void apply(flrw::RunConfig &c, const Overrides &o) {
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (o.seed >= 0) {
    c.seed = std::uint64_t(o.seed);
    c.data.seed = c.seed;
  }
  if (!o.snapshot_times.empty()) c.snapshot_times = o.snapshot_times;
}

int cmd_run(const std::string &path, const Overrides &o) {
  flrw::RunConfig cfg = flrw::load_config(path);
  apply(cfg, o);
  const flrw::RunResult r = flrw::run(cfg);
  std::printf("%s: %d steps, %zu samples -> %s\n", flrw::to_string(cfg.data.kind), r.traj.stats.steps,
              r.traj.records.size(), cfg.output_dir.c_str());
  if (r.failed) {
    std::fprintf(stderr, "numerical failure at t = %.6g: %s\n", r.failure_time, r.error_message.c_str());
    return kNumericalFailure;
  }
  for (const auto &rate : r.rates)
    std::printf("  rate %-10s %+.4f  r2 %.5f%s\n", rate.name.c_str(), rate.fit.rate, rate.fit.r_squared,
                rate.checked ? (rate.ok() ? "" : "  out of band") : "  (info)");
  for (const auto &c : r.checks)
    std::printf("  check %-12s %s  %s\n", c.name.c_str(), flrw::to_string(c.status), c.detail.c_str());
  return r.checks_passed() ? kOk : kAcceptanceFailure;
}

int cmd_converge(const std::string &path, const Overrides &o, const std::vector<int> &res,
                 const std::vector<double> &dts) {
  flrw::RunConfig cfg = flrw::load_config(path);
  apply(cfg, o);
  const flrw::ConvergenceReport rep = flrw::convergence_study(cfg, res, dts);
  nlohmann::json j;
  j["t_compare"] = rep.t_compare;
  j["resolutions"] = rep.resolutions;
  j["spatial_errors"] = rep.spatial_errors;
  j["spatial_ratios"] = rep.spatial_ratios;
  j["initial_constraints"] = rep.initial_constraints;
  j["final_constraints"] = rep.final_constraints;
  j["dts"] = rep.dts;
  j["temporal_diffs"] = rep.temporal_diffs;
  j["temporal_orders"] = rep.temporal_orders;
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream(std::filesystem::path(cfg.output_dir) / "convergence.json") << j.dump(2) << "\n";

  for (std::size_t i = 0; i < rep.spatial_errors.size(); ++i)
    std::printf("n = %4d  error vs n = %d: %.3e\n", rep.resolutions[i], rep.resolutions.back(), rep.spatial_errors[i]);
  for (std::size_t i = 0; i < rep.spatial_ratios.size(); ++i)
    std::printf("ratio %d -> %d: %.3e\n", rep.resolutions[i], rep.resolutions[i + 1], rep.spatial_ratios[i]);
  for (std::size_t i = 0; i < rep.temporal_diffs.size(); ++i)
    std::printf("dt %.4g vs %.4g: %.3e\n", rep.dts[i], rep.dts[i + 1], rep.temporal_diffs[i]);
  for (std::size_t i = 0; i < rep.temporal_orders.size(); ++i)
    std::printf("observed order (dt %.4g): %.3f\n", rep.dts[i + 1], rep.temporal_orders[i]);
  return kOk;
}

int cmd_accept(const std::string &path, const Overrides &o, const std::vector<int> &only) {
  flrw::RunConfig cfg = flrw::load_config(path, flrw::acceptance_profile());
  apply(cfg, o);
  flrw::AcceptanceSuite suite(cfg);
  bool all = true;
  nlohmann::json j = nlohmann::json::array();
  suite.run_all(std::set<int>(only.begin(), only.end()), [&](const flrw::CriterionResult &r) {
    std::printf("[%s] %2d %s: %s (%.1f s)\n", r.passed ? "PASS" : "FAIL", r.id, r.title.c_str(), r.detail.c_str(),
                r.seconds);
    std::fflush(stdout);
    all = all && r.passed;
    j.push_back({{"id", r.id}, {"title", r.title}, {"passed", r.passed}, {"detail", r.detail}, {"seconds", r.seconds}});
  });
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream(std::filesystem::path(cfg.output_dir) / "acceptance.json") << j.dump(2) << "\n";
  return all ? kOk : kAcceptanceFailure;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"FLRW stability simulator"};
  app.require_subcommand(1);
  Overrides o;
  std::string path;
  std::vector<int> resolutions, only;
  std::vector<double> dts;

  auto common = [&](CLI::App *sub) {
    sub->add_option("config", path, "configuration file")->required();
    sub->add_option("--output-dir", o.output_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", o.seed, "random seed (overrides seed)")->check(CLI::NonNegativeNumber);
    sub->add_option("--snapshot-times", o.snapshot_times, "field snapshot times (overrides output.snapshot_times)");
  };
  auto *run = app.add_subcommand("run", "evolve one configuration");
  common(run);
  auto *conv = app.add_subcommand("converge", "spatial / temporal convergence study");
  common(conv);
  conv->add_option("--resolutions", resolutions, "grid points along axis 0");
  conv->add_option("--dts", dts, "fixed step sizes");
  auto *acc = app.add_subcommand("accept", "acceptance suite (config overlays the default profile)");
  common(acc);
  acc->add_option("--only", only, "criterion ids to run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (run->parsed()) return cmd_run(path, o);
    if (conv->parsed()) return cmd_converge(path, o, resolutions, dts);
    if (acc->parsed()) return cmd_accept(path, o, only);
  } catch (const flrw::ConfigError &e) {
    std::fprintf(stderr, "config error: %s\n", e.message().c_str());
    return kConfigError;
  } catch (const flrw::Error &e) {
    std::fprintf(stderr, "%s\n", e.what());
    if (e.kind() == flrw::ErrorKind::Config) return kConfigError;
    if (e.kind() == flrw::ErrorKind::InvalidArgument) return kConfigError;
    return kNumericalFailure;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumericalFailure;
  }
  return kOk;
}
