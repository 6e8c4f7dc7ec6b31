#include "seqmon/snapshot.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace seqmon {

using nlohmann::json;

namespace {

const char* mode_name(ModelMode m) { return m == ModelMode::known_model ? "known_model" : "bounded_model"; }
const char* kind_name(StatisticKind k) { return k == StatisticKind::gaussian_shift ? "gaussian_shift" : "sir"; }

ModelMode mode_from(const std::string& s) {
  if (s == "known_model") return ModelMode::known_model;
  if (s == "bounded_model") return ModelMode::bounded_model;
  throw FormatError("unknown mode '" + s + "'");
}

StatisticKind kind_from(const std::string& s) {
  if (s == "gaussian_shift") return StatisticKind::gaussian_shift;
  if (s == "sir") return StatisticKind::sir;
  throw FormatError("unknown statistic '" + s + "'");
}

json vector_to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json config_to_json(const MonitorConfig& c) {
  return {{"alpha", c.alpha},       {"rho_bar", c.rho_bar},
          {"theta_lo", c.theta_lo}, {"theta_hi", c.theta_hi},
          {"theta_grid_size", c.theta_grid_size}, {"mode", mode_name(c.mode)}};
}

MonitorConfig config_from_json(const json& j) {
  MonitorConfig c;
  c.alpha = j.at("alpha").get<double>();
  c.rho_bar = j.at("rho_bar").get<double>();
  c.theta_lo = j.at("theta_lo").get<double>();
  c.theta_hi = j.at("theta_hi").get<double>();
  c.theta_grid_size = j.at("theta_grid_size").get<Eigen::Index>();
  c.mode = mode_from(j.at("mode").get<std::string>());
  return c;
}

json record_to_json(const ItemRecord& r) {
  return {{"id", r.id},           {"rho", r.rho},   {"mu", r.mu},
          {"beta0", r.beta.beta0}, {"beta1", r.beta.beta1}, {"pi", r.pi}};
}

ItemRecord record_from_json(const json& j) {
  ItemRecord r;
  r.id = j.at("id").get<ItemId>();
  r.rho = j.value("rho", r.rho);
  r.mu = j.value("mu", r.mu);
  r.beta.beta0 = j.value("beta0", r.beta.beta0);
  r.beta.beta1 = j.value("beta1", r.beta.beta1);
  r.pi = j.value("pi", r.pi);
  return r;
}

json stream_to_json(const StreamState& s) {
  return {{"exposure_count", s.exposure_count}, {"u_stat", s.u_stat},           {"log1p_u", s.log1p_u},
          {"history_len", s.history_len},       {"degenerate_updates", s.degenerate_updates}};
}

StreamState stream_from_json(const json& j, ItemId id) {
  StreamState s;
  s.item_id = id;
  s.exposure_count = j.at("exposure_count").get<std::int64_t>();
  s.u_stat = j.at("u_stat").get<double>();
  s.log1p_u = j.at("log1p_u").get<double>();
  s.history_len = j.at("history_len").get<std::int64_t>();
  s.degenerate_updates = j.at("degenerate_updates").get<std::int64_t>();
  return s;
}

json bounded_to_json(const BoundedStreamState& s) {
  return {{"exposure_count", s.exposure_count},
          {"u_grid", vector_to_json(s.u_grid)},
          {"log1p_u_grid", vector_to_json(s.log1p_u_grid)},
          {"pi_grid", vector_to_json(s.pi_grid)},
          {"history_len", s.history_len},
          {"degenerate_updates", s.degenerate_updates}};
}

BoundedStreamState bounded_from_json(const json& j, ItemId id) {
  BoundedStreamState s;
  s.item_id = id;
  s.exposure_count = j.at("exposure_count").get<std::int64_t>();
  s.u_grid = vector_from_json(j.at("u_grid"));
  s.log1p_u_grid = vector_from_json(j.at("log1p_u_grid"));
  s.pi_grid = vector_from_json(j.at("pi_grid"));
  s.history_len = j.at("history_len").get<std::int64_t>();
  s.degenerate_updates = j.at("degenerate_updates").get<std::int64_t>();
  if (s.u_grid.size() != s.pi_grid.size() || s.log1p_u_grid.size() != s.pi_grid.size())
    throw FormatError("item " + std::to_string(id) + ": grid lengths differ");
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

json parse_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::write(fd, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw std::system_error(errno, std::generic_category(), "write");
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

}  // namespace

std::string format_double(double value) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

json snapshot_to_json(const Monitor& monitor) {
  json items = json::array();
  for (const auto& [id, t] : monitor.items()) {
    items.push_back({{"record", record_to_json(t.record)},
                     {"known", stream_to_json(t.known)},
                     {"bounded", bounded_to_json(t.bounded)}});
  }
  return {{"schema_version", kSnapshotSchemaVersion},
          {"time", monitor.time()},
          {"statistic", kind_name(monitor.kind())},
          {"config", config_to_json(monitor.config())},
          {"items", std::move(items)}};
}

Monitor snapshot_from_json(const json& doc) {
  try {
    const int version = doc.at("schema_version").get<int>();
    if (version != kSnapshotSchemaVersion)
      throw FormatError("snapshot schema_version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kSnapshotSchemaVersion) + ")");
    Monitor monitor(config_from_json(doc.at("config")), kind_from(doc.at("statistic").get<std::string>()));
    monitor.set_time(doc.at("time").get<std::int64_t>());
    for (const auto& entry : doc.at("items")) {
      Monitor::Tracked t;
      t.record = record_from_json(entry.at("record"));
      t.known = stream_from_json(entry.at("known"), t.record.id);
      t.bounded = bounded_from_json(entry.at("bounded"), t.record.id);
      monitor.restore(std::move(t));
    }
    return monitor;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed snapshot: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid snapshot: ") + e.what());
  }
}

Monitor read_snapshot(const std::filesystem::path& path) { return snapshot_from_json(parse_file(path)); }

void write_snapshot(const std::filesystem::path& path, const Monitor& monitor) {
  atomic_write(path, snapshot_to_json(monitor).dump(1) + "\n");
}

void atomic_write(const std::filesystem::path& path, const std::string& contents, const std::optional<WriteFault>& fault) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw std::system_error(errno, std::generic_category(), "open " + tmp.string());
  try {
    if (fault) {
      const std::size_t n = std::min(fault->fail_after_bytes, contents.size());
      write_all(fd, contents.data(), n);
      throw std::runtime_error("injected write failure after " + std::to_string(n) + " bytes");
    }
    write_all(fd, contents.data(), contents.size());
    if (::fsync(fd) != 0) throw std::system_error(errno, std::generic_category(), "fsync");
    if (::close(fd) != 0) {
      const int err = errno;
      std::filesystem::remove(tmp);
      throw std::system_error(err, std::generic_category(), "close");
    }
  } catch (...) {
    ::close(fd);
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw;
  }
  std::filesystem::rename(tmp, path);
}

StateLock::StateLock(const std::filesystem::path& state_path) {
  std::filesystem::path lock = state_path;
  lock += ".lock";
  fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw std::system_error(errno, std::generic_category(), "open " + lock.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    throw std::runtime_error("state " + state_path.string() + " is locked by another process");
  }
}

StateLock::~StateLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

json batch_to_json(const BatchInput& b) {
  json doc = json::object();
  if (b.administration) doc["administration"] = *b.administration;
  if (b.config) doc["config"] = config_to_json(*b.config);
  if (b.statistic) doc["statistic"] = kind_name(*b.statistic);
  if (!b.add_items.empty()) {
    json add = json::array();
    for (const auto& r : b.add_items) add.push_back(record_to_json(r));
    doc["add_items"] = std::move(add);
  }
  if (!b.remove_items.empty()) doc["remove_items"] = b.remove_items;
  if (b.responses) {
    const ResponseMatrix& m = *b.responses;
    json rows = json::array();
    std::string row(static_cast<std::size_t>(m.entries.cols()), '0');
    for (Eigen::Index r = 0; r < m.entries.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.entries.cols(); ++c) row[static_cast<std::size_t>(c)] = m.entries(r, c) ? '1' : '0';
      rows.push_back(row);
    }
    doc["responses"] = {{"item_ids", m.item_ids}, {"rows", std::move(rows)}};
    doc["anchor_ids"] = b.anchor_ids;
  } else {
    json obs = json::array();
    for (const auto& o : b.observations) {
      json entry = {{"item_id", o.item_id}, {"x", o.x}};
      if (o.se > 0.0) {
        entry["xi0_hat"] = o.xi0_hat;
        entry["se"] = o.se;
      }
      obs.push_back(std::move(entry));
    }
    doc["observations"] = std::move(obs);
  }
  return doc;
}

BatchInput batch_from_json(const json& doc) {
  static const std::vector<std::string> known_keys = {"administration", "config",       "statistic", "add_items",
                                                      "remove_items",   "observations", "responses", "anchor_ids"};
  try {
    if (!doc.is_object()) throw FormatError("batch must be a JSON object");
    for (const auto& [key, value] : doc.items())
      if (std::find(known_keys.begin(), known_keys.end(), key) == known_keys.end())
        throw FormatError("unknown batch key '" + key + "'");

    BatchInput b;
    if (doc.contains("administration")) b.administration = doc["administration"].get<std::int64_t>();
    if (doc.contains("config")) b.config = config_from_json(doc["config"]);
    if (doc.contains("statistic")) b.statistic = kind_from(doc["statistic"].get<std::string>());
    if (doc.contains("add_items"))
      for (const auto& r : doc["add_items"]) b.add_items.push_back(record_from_json(r));
    if (doc.contains("remove_items")) b.remove_items = doc["remove_items"].get<std::vector<ItemId>>();

    const bool has_obs = doc.contains("observations");
    const bool has_resp = doc.contains("responses");
    if (has_obs == has_resp) throw FormatError("batch needs exactly one of 'observations' or 'responses'");
    if (has_obs) {
      for (const auto& o : doc["observations"]) {
        MonitorObservation m;
        m.item_id = o.at("item_id").get<ItemId>();
        m.x = o.at("x").get<double>();
        m.xi0_hat = o.value("xi0_hat", 0.0);
        m.se = o.value("se", 0.0);
        b.observations.push_back(m);
      }
    } else {
      const json& r = doc["responses"];
      ResponseMatrix m;
      m.item_ids = r.at("item_ids").get<std::vector<ItemId>>();
      const auto rows = r.at("rows").get<std::vector<std::string>>();
      const auto cols = static_cast<Eigen::Index>(m.item_ids.size());
      m.entries.resize(static_cast<Eigen::Index>(rows.size()), cols);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != cols)
          throw FormatError("response row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                            " entries, expected " + std::to_string(cols));
        for (Eigen::Index c = 0; c < cols; ++c) {
          const char ch = rows[i][static_cast<std::size_t>(c)];
          if (ch != '0' && ch != '1') throw FormatError("response row " + std::to_string(i) + " is not a 0/1 string");
          m.entries(static_cast<Eigen::Index>(i), c) = static_cast<std::uint8_t>(ch == '1');
        }
      }
      if (!doc.contains("anchor_ids")) throw FormatError("response batch needs 'anchor_ids'");
      b.anchor_ids = doc["anchor_ids"].get<std::vector<ItemId>>();
      b.responses = std::move(m);
    }
    return b;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed batch: ") + e.what());
  }
}

BatchInput read_batch(const std::filesystem::path& path) { return batch_from_json(parse_file(path)); }

BatchInput batch_from_trace(const StepTrace& trace, const StudyConfig& config) {
  BatchInput b;
  b.administration = trace.time;
  if (trace.time == 1) {
    b.config = config.monitor_config();
    b.statistic = config.statistic_kind();
  }
  b.add_items = trace.added;
  b.remove_items = trace.removed;
  b.observations = trace.observations;
  b.responses = trace.responses;
  b.anchor_ids = trace.anchors;
  return b;
}

}  // namespace seqmon
