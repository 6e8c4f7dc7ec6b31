#include <iostream>

#include <CLI11.hpp>

#include "seqmon/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Sequential change detection for monitored item pools"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* simulate = app.add_subcommand("simulate", "Run a replicated simulation study and write CSV tables");
  simulate->add_option("--config", config_path, "Study configuration (key = value)")->required();
  simulate->add_option("--out", out_dir, "Output directory")->required();

  seqmon::MonitorArgs monitor_args;
  std::string state, batch, report;
  double alpha = 0.0;
  auto* monitor = app.add_subcommand("monitor", "Apply one administration batch to a monitor snapshot");
  monitor->add_option("--state", state, "Snapshot JSON; created from the batch when absent")->required();
  monitor->add_option("--batch", batch, "Batch JSON")->required();
  auto* alpha_opt = monitor->add_option("--alpha", alpha, "Compound-risk threshold for this administration only");
  auto* report_opt = monitor->add_option("--report", report, "Detection report CSV (default: beside the state)");

  std::string suite;
  auto* validate = app.add_subcommand("validate", "Run the built-in oracle and calibration checks");
  validate->add_option("--suite", suite, "oracles, calibration or all")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : seqmon::kExitUsage;
  }

  try {
    if (simulate->parsed()) return seqmon::cmd_simulate(config_path, out_dir, std::cout, std::cerr);
    if (monitor->parsed()) {
      monitor_args.state = state;
      monitor_args.batch = batch;
      if (alpha_opt->count() > 0) monitor_args.alpha = alpha;
      if (report_opt->count() > 0) monitor_args.report = report;
      return seqmon::cmd_monitor(monitor_args, std::cout, std::cerr);
    }
    return seqmon::cmd_validate(suite, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return seqmon::kExitFailure;
  }
}
