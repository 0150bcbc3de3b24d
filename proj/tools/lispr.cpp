// Command-line front end: run, sweep, verify, heatmap, compare.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lispr/experiment.hpp"
#include "lispr/verify.hpp"

using namespace lispr;

namespace {

SeedRange parse_seed_range(const std::string &text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw std::invalid_argument("seed range must look like a..b");
  SeedRange r;
  try {
    r.first = std::stoull(text.substr(0, dots));
    r.last = std::stoull(text.substr(dots + 2));
  } catch (const std::exception &) {
    throw std::invalid_argument("seed range must look like a..b");
  }
  if (r.last < r.first) throw std::invalid_argument("seed range is empty");
  return r;
}

int cmd_run(const std::string &config_path, const std::string &out_dir, std::optional<std::uint64_t> seed,
            const std::string &proxy) {
  auto j = json::parse(read_text_file(config_path));
  if (seed) j["seed"] = *seed;
  if (!proxy.empty()) j["proxy"] = proxy;
  auto cfg = parse_run_config(j);
  resolve_paths(cfg, fs::path(config_path).parent_path());
  const auto out = run_experiment(cfg);
  write_run(out, out_dir);
  const auto &last = out.curve.back();
  std::printf("final step %zu: mean return %.4f [%.4f, %.4f], success %.3f\n", last.step, last.mean_return,
              last.ci95_lo, last.ci95_hi, last.success_rate);
  std::printf("artifacts written to %s\n", out_dir.c_str());
  return 0;
}

int cmd_sweep(const std::string &config_path, const std::string &out_dir) {
  const auto j = json::parse(read_text_file(config_path));
  const auto entries = run_sweep(j, out_dir, fs::path(config_path).parent_path());
  std::printf("%-4s %-8s %-12s %-14s %s\n", "rank", "run", "final", "auc", "params");
  for (std::size_t i = 0; i < entries.size(); ++i)
    std::printf("%-4zu %-8s %-12.4f %-14.1f %s\n", i + 1, entries[i].name.c_str(), entries[i].final_return,
                entries[i].auc, entries[i].params.dump().c_str());
  return 0;
}

int cmd_verify(const std::string &suite, const std::string &range, const std::string &report_path) {
  const SeedRange seeds = range.empty() ? SeedRange{} : parse_seed_range(range);
  const auto reports = run_suite(suite, seeds);
  std::ofstream report(report_path, std::ios::trunc);
  if (!report) throw std::runtime_error("cannot write " + report_path);
  std::printf("%-30s %-22s %-26s %-22s %-7s %-11s %s\n", "check", "mdp", "learner", "threshold", "gamma", "violation",
              "result");
  std::size_t failed = 0, diag_failed = 0;
  for (const auto &r : reports) {
    report << r.to_json().dump() << "\n";
    const char *result = r.pass ? "pass" : (r.asserted ? "FAIL" : "gap");
    if (!r.pass) ++(r.asserted ? failed : diag_failed);
    std::printf("%-30s %-22s %-26s %-22s %-7g %-11.3g %s%s\n", r.check.c_str(), r.mdp_id.c_str(), r.learner.c_str(),
                r.threshold.c_str(), r.gamma, r.max_violation, result, r.asserted ? "" : " (diagnostic)");
  }
  std::printf("\n%zu checks, %zu asserted failures, %zu diagnostic gaps; report: %s\n", reports.size(), failed,
              diag_failed, report_path.c_str());
  return failed == 0 ? 0 : 1;
}

int cmd_heatmap(const std::string &run_dir, const std::string &table, std::optional<double> tau) {
  const auto which = heatmap_table_from_string(table);
  const auto hm = export_heatmap(run_dir, which, tau);
  std::fputs(grid_csv(hm.values).c_str(), stdout);
  std::printf("\nmembership (1 = primal option):\n");
  std::fputs(grid_csv(hm.membership).c_str(), stdout);
  return 0;
}

int cmd_compare(const std::string &a_path, const std::string &b_path, double threshold) {
  const auto a = parse_curve_csv(read_text_file(a_path));
  const auto b = parse_curve_csv(read_text_file(b_path));
  const auto s = compare_curves(a, b, threshold);
  std::printf("step,mean_a,mean_b,diff_b_minus_a\n");
  for (std::size_t i = 0; i < s.steps.size(); ++i)
    std::printf("%zu,%s,%s,%s\n", s.steps[i], fmt_double(a[i].mean_return).c_str(),
                fmt_double(b[i].mean_return).c_str(), fmt_double(s.difference[i]).c_str());
  auto first = [](const std::optional<std::size_t> &x) { return x ? std::to_string(*x) : std::string("none"); };
  std::printf("\nauc_a=%s auc_b=%s auc_ratio_b_over_a=%s\n", fmt_double(s.auc_a).c_str(),
              fmt_double(s.auc_b).c_str(), fmt_double(s.auc_ratio).c_str());
  std::printf("first step with mean_return >= %g: a=%s b=%s\n", threshold, first(s.first_a).c_str(),
              first(s.first_b).c_str());
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Tabular LISPR experiments and exact checks"};
  app.require_subcommand(1);

  std::string config, out, proxy, suite = "all", range, report = "verify_report.jsonl", run_dir, table = "g";
  std::string curve_a, curve_b;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  double threshold = 0.9;

  auto *run = app.add_subcommand("run", "train and evaluate one configuration");
  run->add_option("--config", config, "JSON run config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--proxy", proxy, "recovery reward")
      ->check(CLI::IsMember({"oracle", "diff", "scaled-g", "scaled-next-g", "indicator"}));

  auto *sweep = app.add_subcommand("sweep", "run the Cartesian product of a parameter grid");
  sweep->add_option("--config", config, "JSON sweep config {base, grid}")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "output directory")->required();

  auto *verify = app.add_subcommand("verify", "exact checks on fixture and random MDPs");
  verify->add_option("--suite", suite, "suite")->check(CLI::IsMember({"core", "proxies", "diagnostics", "all"}));
  verify->add_option("--mdp-seed-range", range, "random MDP seeds, a..b (default 0..99)");
  verify->add_option("--report", report, "JSON-lines report path");

  auto *heat = app.add_subcommand("heatmap", "export a value grid and the primal-region grid of a run");
  heat->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  heat->add_option("--table", table, "table")->check(CLI::IsMember({"g", "v", "qmax"}));
  heat->add_option("--tau", tau, "membership at G >= tau instead of the run's threshold");

  auto *cmp = app.add_subcommand("compare", "compare two learning curves");
  cmp->add_option("a", curve_a, "first curve.csv")->required()->check(CLI::ExistingFile);
  cmp->add_option("b", curve_b, "second curve.csv")->required()->check(CLI::ExistingFile);
  cmp->add_option("--threshold", threshold, "return level for first-step-to-threshold");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, out, seed, proxy);
    if (*sweep) return cmd_sweep(config, out);
    if (*verify) return cmd_verify(suite, range, report);
    if (*heat) return cmd_heatmap(run_dir, table, tau);
    if (*cmp) return cmd_compare(curve_a, curve_b, threshold);
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
