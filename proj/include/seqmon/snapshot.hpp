#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqmon/monitor.hpp"
#include "seqmon/sim_engine.hpp"

namespace seqmon {

inline constexpr int kSnapshotSchemaVersion = 1;

/// Unreadable, malformed or incompatible snapshot or batch file.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

nlohmann::json snapshot_to_json(const Monitor& monitor);
/// Throws FormatError on a schema_version mismatch or a malformed document.
Monitor snapshot_from_json(const nlohmann::json& doc);

Monitor read_snapshot(const std::filesystem::path& path);
void write_snapshot(const std::filesystem::path& path, const Monitor& monitor);

/// Failure injection for atomic_write: throw once `fail_after_bytes` bytes of the temp file are written.
struct WriteFault {
  std::size_t fail_after_bytes = 0;
};

/// Writes `contents` to a sibling temp file, fsyncs it and renames it over `path`. On any failure the
/// previous file at `path` is left as it was.
void atomic_write(const std::filesystem::path& path, const std::string& contents,
                  const std::optional<WriteFault>& fault = std::nullopt);

/// Exclusive advisory lock on `<path>.lock`, released on destruction. Throws std::runtime_error when held elsewhere.
class StateLock {
public:
  explicit StateLock(const std::filesystem::path& state_path);
  ~StateLock();
  StateLock(const StateLock&) = delete;
  StateLock& operator=(const StateLock&) = delete;

private:
  int fd_ = -1;
};

/// One administration handed to `monitor`.
struct BatchInput {
  std::optional<std::int64_t> administration;  // must equal the snapshot time + 1 when given
  std::optional<MonitorConfig> config;          // used only when no snapshot exists yet
  std::optional<StatisticKind> statistic;
  std::vector<ItemRecord> add_items;
  std::vector<ItemId> remove_items;
  std::vector<MonitorObservation> observations;  // statistic mode
  std::optional<ResponseMatrix> responses;       // response mode
  std::vector<ItemId> anchor_ids;
};

nlohmann::json batch_to_json(const BatchInput& batch);
/// Throws FormatError on malformed input, including both or neither of observations/responses.
BatchInput batch_from_json(const nlohmann::json& doc);
BatchInput read_batch(const std::filesystem::path& path);

/// Batch reproducing one simulated administration; the first one also carries the monitor setup.
BatchInput batch_from_trace(const StepTrace& trace, const StudyConfig& config);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

}  // namespace seqmon
