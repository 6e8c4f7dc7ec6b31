#include "seqmon/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "seqmon/config.hpp"
#include "seqmon/validate.hpp"

namespace seqmon {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

void write_trajectories_csv(std::ostream& out, std::span<const MetricTrajectory> trajectories) {
  out << "replication,t,fnp,fdp,detections\n";
  for (const auto& tr : trajectories)
    for (std::size_t i = 0; i < tr.fnp.size(); ++i)
      out << tr.replication << ',' << i + 1 << ',' << format_double(tr.fnp[i]) << ',' << format_double(tr.fdp[i]) << ','
          << tr.detections[i] << '\n';
}

void write_quantiles_csv(std::ostream& out, std::span<const QuantileRow> rows) {
  out << "t,metric,q05,q25,q50,q75,q95\n";
  for (const auto& r : rows) {
    out << r.t << ',' << r.metric;
    for (double q : r.q) out << ',' << format_double(q);
    out << '\n';
  }
}

void write_detections_csv(std::ostream& out, const StepReport& report) {
  out << "item_id,score,detected\n";
  for (const auto& s : report.scores) {
    const bool hit = std::binary_search(report.decision.detected.begin(), report.decision.detected.end(), s.item_id);
    out << s.item_id << ',' << format_double(s.score) << ',' << (hit ? 1 : 0) << '\n';
  }
}

int cmd_simulate(const std::filesystem::path& config_path, const std::filesystem::path& out_dir, std::ostream& out,
                 std::ostream& err) {
  StudyConfig config;
  try {
    config = load_study_config(config_path);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const auto start = std::chrono::steady_clock::now();
  const std::vector<MetricTrajectory> trajectories = run_study(config);
  const std::vector<QuantileRow> rows = aggregate_quantiles(trajectories);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  try {
    std::filesystem::create_directories(out_dir);
    std::ostringstream traj, quant;
    write_trajectories_csv(traj, trajectories);
    write_quantiles_csv(quant, rows);
    write_text(out_dir / "trajectories.csv", traj.str());
    write_text(out_dir / "quantiles.csv", quant.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }

  std::map<std::string, std::vector<double>> medians;
  for (const auto& r : rows) medians[r.metric].push_back(r.q[2]);
  out << config.replications << " replications x " << config.horizon << " administrations in " << std::fixed
      << std::setprecision(1) << seconds << " s\n";
  out << std::setprecision(4);
  for (const char* metric : {"fnp", "fdp", "detections"}) {
    const auto& m = medians[metric];
    out << std::left << std::setw(11) << metric << "median at t=" << m.size() << ": " << m.back()
        << ", max over t: " << *std::max_element(m.begin(), m.end()) << '\n';
  }
  out << "wrote " << (out_dir / "trajectories.csv").string() << " and " << (out_dir / "quantiles.csv").string()
      << '\n';
  return kExitOk;
}

StepReport apply_batch(std::optional<Monitor>& monitor, const BatchInput& batch, std::optional<double> alpha) {
  if (!monitor) {
    if (!batch.config || !batch.statistic)
      throw FormatError("no snapshot exists and the batch carries no 'config' and 'statistic' to start one");
    monitor.emplace(*batch.config, *batch.statistic);
  } else if (batch.statistic && *batch.statistic != monitor->kind()) {
    throw FormatError("batch statistic does not match the snapshot");
  }
  if (batch.administration && *batch.administration != monitor->time() + 1)
    throw FormatError("batch is administration " + std::to_string(*batch.administration) + " but the snapshot expects " +
                      std::to_string(monitor->time() + 1));

  Monitor work = *monitor;
  for (ItemId id : batch.remove_items) work.remove_item(id);
  for (const auto& r : batch.add_items) work.add_item(r);
  StepReport report = batch.responses ? work.step_responses(*batch.responses, batch.anchor_ids, alpha)
                                      : work.step(batch.observations, alpha);
  *monitor = std::move(work);
  return report;
}

int cmd_monitor(const MonitorArgs& args, std::ostream& out, std::ostream& err) {
  if (args.alpha && !(*args.alpha > 0.0 && *args.alpha < 1.0)) {
    err << "error: --alpha must lie in (0,1)\n";
    return kExitUsage;
  }

  std::optional<StateLock> lock;
  try {
    lock.emplace(args.state);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitState;
  }

  BatchInput batch;
  try {
    batch = read_batch(args.batch);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  std::optional<Monitor> monitor;
  if (std::filesystem::exists(args.state)) {
    try {
      monitor = read_snapshot(args.state);
    } catch (const std::exception& e) {
      err << "error: state " << args.state.string() << " refused: " << e.what() << '\n';
      return kExitState;
    }
  }

  StepReport report;
  try {
    report = apply_batch(monitor, batch, args.alpha);
  } catch (const std::exception& e) {
    err << "error: batch refused: " << e.what() << '\n';
    return kExitUsage;
  }

  const std::filesystem::path report_path =
      args.report.value_or(args.state.parent_path() / "detections.csv");
  try {
    std::ostringstream csv;
    write_detections_csv(csv, report);
    atomic_write(report_path, csv.str());
    write_snapshot(args.state, *monitor);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }

  out << "administration " << report.time << ": " << report.scores.size() << " items, "
      << report.decision.detected.size() << " detected, realized risk " << format_double(report.decision.realized_risk);
  if (report.m_hat) out << ", m_hat " << format_double(*report.m_hat);
  out << '\n';
  for (ItemId id : report.decision.detected) out << "  detected " << id << '\n';
  return kExitOk;
}

int cmd_validate(const std::string& suite, std::ostream& out, std::ostream& err) {
  std::vector<CheckResult> results;
  try {
    results = run_suite(suite);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  bool all = true;
  for (const auto& r : results) {
    out << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(28) << r.name << std::right << std::fixed
        << std::setprecision(2) << std::setw(7) << r.seconds << " s  " << r.detail << '\n';
    all = all && r.passed;
  }
  out << (all ? "all checks passed" : "some checks failed") << '\n';
  return all ? kExitOk : kExitFailure;
}

}  // namespace seqmon
