#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>

#include "seqmon/monitor.hpp"
#include "seqmon/sim_engine.hpp"
#include "seqmon/snapshot.hpp"

namespace seqmon {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,   // a check or validation failed
  kExitUsage = 2,     // bad arguments, config or batch
  kExitState = 3,     // snapshot missing, corrupt, incompatible or locked
};

/// `replication,t,fnp,fdp,detections`, one row per replication and time.
void write_trajectories_csv(std::ostream& out, std::span<const MetricTrajectory> trajectories);
/// `t,metric,q05,q25,q50,q75,q95`.
void write_quantiles_csv(std::ostream& out, std::span<const QuantileRow> rows);
/// `item_id,score,detected`, one row per pool item in ascending id.
void write_detections_csv(std::ostream& out, const StepReport& report);

int cmd_simulate(const std::filesystem::path& config_path, const std::filesystem::path& out_dir, std::ostream& out,
                 std::ostream& err);

struct MonitorArgs {
  std::filesystem::path state;
  std::filesystem::path batch;
  std::optional<double> alpha;
  std::optional<std::filesystem::path> report;  // defaults to detections.csv beside the state file
};

/// Applies one batch to the snapshot: removals, additions, the update and the detection step. The snapshot is
/// rewritten only when every stage succeeds.
int cmd_monitor(const MonitorArgs& args, std::ostream& out, std::ostream& err);

/// Applies one batch to an in-memory monitor, creating it from the batch when absent.
StepReport apply_batch(std::optional<Monitor>& monitor, const BatchInput& batch, std::optional<double> alpha);

int cmd_validate(const std::string& suite, std::ostream& out, std::ostream& err);

}  // namespace seqmon
