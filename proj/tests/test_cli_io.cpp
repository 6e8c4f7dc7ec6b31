#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "seqmon/commands.hpp"
#include "seqmon/config.hpp"
#include "seqmon/snapshot.hpp"

using namespace seqmon;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("seqmon_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SEQMON_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

Monitor random_monitor(Rng& rng) {
  MonitorConfig cfg;
  cfg.mode = uniform01(rng) < 0.5 ? ModelMode::known_model : ModelMode::bounded_model;
  cfg.alpha = uniform(rng, 0.001, 0.2);
  cfg.rho_bar = uniform(rng, 0.01, 0.3);
  cfg.theta_lo = uniform(rng, 0.5, 1.0);
  cfg.theta_hi = cfg.theta_lo + uniform(rng, 0.0, 2.0);
  cfg.theta_grid_size = 2 + static_cast<Eigen::Index>(uniform_index(rng, 8));
  Monitor m(cfg, uniform01(rng) < 0.5 ? StatisticKind::gaussian_shift : StatisticKind::sir);
  const auto grid = cfg.theta_grid();
  const std::size_t n = uniform_index(rng, 12);
  for (std::size_t k = 0; k < n; ++k) {
    Monitor::Tracked t;
    t.record.id = static_cast<ItemId>(3 * k + 1 + uniform_index(rng, 3));
    t.record.rho = uniform(rng, 1e-4, 0.5);
    t.record.mu = uniform(rng, -3.0, 3.0);
    t.record.beta = {uniform(rng, -2.0, 2.0), uniform(rng, 0.5, 2.0)};
    t.record.pi = uniform01(rng);
    const bool huge = uniform01(rng) < 0.3;
    t.known.item_id = t.record.id;
    t.known.exposure_count = static_cast<std::int64_t>(uniform_index(rng, 1000));
    t.known.log1p_u = huge ? uniform(rng, 300.0, 5000.0) : uniform(rng, 0.0, 50.0);
    t.known.u_stat = huge ? 1e308 : std::expm1(t.known.log1p_u);
    t.known.history_len = t.known.exposure_count + static_cast<std::int64_t>(uniform_index(rng, 50));
    t.known.degenerate_updates = static_cast<std::int64_t>(uniform_index(rng, 3));
    t.bounded = BoundedStreamState::fresh(t.record.id, grid);
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
      t.bounded.log1p_u_grid[g] = uniform(rng, 0.0, huge ? 2000.0 : 30.0);
      t.bounded.u_grid[g] = std::min(1e308, std::expm1(t.bounded.log1p_u_grid[g]));
    }
    t.bounded.exposure_count = t.known.exposure_count;
    t.bounded.history_len = t.known.history_len;
    m.restore(t);
  }
  m.set_time(static_cast<std::int64_t>(uniform_index(rng, 500)));
  return m;
}

void require_same(const Monitor& a, const Monitor& b) {
  REQUIRE(a.kind() == b.kind());
  REQUIRE(a.time() == b.time());
  REQUIRE(a.config().mode == b.config().mode);
  REQUIRE(a.config().alpha == b.config().alpha);
  REQUIRE(a.config().rho_bar == b.config().rho_bar);
  REQUIRE(a.config().theta_lo == b.config().theta_lo);
  REQUIRE(a.config().theta_hi == b.config().theta_hi);
  REQUIRE(a.config().theta_grid_size == b.config().theta_grid_size);
  REQUIRE(a.items().size() == b.items().size());
  for (const auto& [id, t] : a.items()) {
    const auto& u = b.items().at(id);
    REQUIRE(t.record == u.record);
    REQUIRE(t.known == u.known);
    REQUIRE(t.bounded == u.bounded);
  }
  for (const auto& s : a.scores()) REQUIRE(s.score == b.score(s.item_id));
}

BatchInput gaussian_batch(std::int64_t administration, std::vector<ItemId> ids) {
  BatchInput b;
  b.administration = administration;
  b.config = MonitorConfig{};
  b.statistic = StatisticKind::gaussian_shift;
  for (ItemId id : ids) {
    ItemRecord r;
    r.id = id;
    r.rho = 0.05;
    r.mu = 1.5;
    b.add_items.push_back(r);
  }
  return b;
}

}  // namespace

TEST_CASE("config parser: comments, overrides and baselines") {
  const StudyConfig c = parse_study_config(
      "# a study\n"
      "study = irt_responses   # trailing comment\n"
      "\n"
      "mode = bounded_model\n"
      "horizon = 7\n"
      "alpha=0.02\n"
      "selection = bernoulli\n"
      "select_lambda = 0.2\n");
  CHECK(c.study == StudyKind::irt_responses);
  CHECK(c.mode == ModelMode::bounded_model);
  CHECK(c.horizon == 7);
  CHECK(c.alpha == 0.02);
  CHECK(c.selection.kind == SelectionPolicy::Kind::bernoulli);
  CHECK(c.selection.lambda == 0.2);
  CHECK(c.min_new_items == StudyConfig::study2().min_new_items);
  CHECK(c.theta_lo == StudyConfig::study2().theta_lo);
}

TEST_CASE("config parser rejects bad input and names the key") {
  auto key_of = [](const char* text) -> std::string {
    try {
      parse_study_config(text);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return "";
  };
  CHECK(key_of("horizon = 5\n").empty());
  CHECK(key_of("horizn = 5\n") == "horizn");
  CHECK(key_of("horizon = 5\nhorizon = 6\n") == "horizon");
  CHECK(key_of("alpha = 0.0x\n") == "alpha");
  CHECK(key_of("alpha = \n") == "alpha");
  CHECK(key_of("alpha = 1.5\n") == "alpha");
  CHECK(key_of("mode = sometimes\n") == "mode");
  CHECK(key_of("just words\n") == "line 1");
  CHECK(key_of("study = irt_responses\nmin_new_items = 0\n") == "min_new_items");
  CHECK_THROWS_AS(load_study_config("/nonexistent/seqmon.cfg"), ConfigError);
}

TEST_CASE("config format and parse round-trip") {
  StudyConfig c = StudyConfig::study2(ModelMode::bounded_model);
  c.alpha = 0.1 + 0.2;
  c.rho_hi = 1.0 / 3.0;
  c.seed = 0xFFFFFFFFFFFFull;
  c.examinees_lo = 17;
  const StudyConfig back = parse_study_config(format_study_config(c));
  CHECK(format_study_config(back) == format_study_config(c));
  CHECK(back.alpha == c.alpha);
  CHECK(back.rho_hi == c.rho_hi);
  CHECK(back.seed == c.seed);
  CHECK(back.examinees_lo == 17);
}

TEST_CASE("bundled configs parse and validate") {
  for (const auto& entry : fs::directory_iterator(SEQMON_CONFIGS)) {
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_study_config(entry.path()).validate());
  }
}

TEST_CASE("snapshot round-trip preserves random states exactly") {
  Rng rng(61, 0);
  TempDir dir;
  for (int trial = 0; trial < 1000; ++trial) {
    const Monitor m = random_monitor(rng);
    require_same(m, snapshot_from_json(snapshot_to_json(m)));
    if (trial % 100 == 0) {
      write_snapshot(dir.path / "state.json", m);
      require_same(m, read_snapshot(dir.path / "state.json"));
    }
  }
}

TEST_CASE("snapshot schema mismatch and damage are refused") {
  Rng rng(62, 0);
  auto doc = snapshot_to_json(random_monitor(rng));
  doc["schema_version"] = kSnapshotSchemaVersion + 1;
  CHECK_THROWS_AS(snapshot_from_json(doc), FormatError);
  doc.erase("schema_version");
  CHECK_THROWS_AS(snapshot_from_json(doc), FormatError);
  TempDir dir;
  spit(dir.path / "bad.json", "{\"schema_version\": 1, \"items\": [");
  CHECK_THROWS_AS(read_snapshot(dir.path / "bad.json"), FormatError);
  CHECK_THROWS(read_snapshot(dir.path / "missing.json"));
}

TEST_CASE("atomic write leaves the previous file intact on failure") {
  TempDir dir;
  const fs::path p = dir.path / "file.txt";
  atomic_write(p, "old contents\n");
  for (std::size_t cut : {0ul, 1ul, 5ul}) {
    CHECK_THROWS(atomic_write(p, "new contents that are longer\n", WriteFault{cut}));
    CHECK(slurp(p) == "old contents\n");
  }
  std::size_t leftovers = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++leftovers;
  CHECK(leftovers == 1);
  atomic_write(p, "new\n");
  CHECK(slurp(p) == "new\n");
}

TEST_CASE("state lock is exclusive") {
  TempDir dir;
  const fs::path state = dir.path / "state.json";
  {
    StateLock held(state);
    CHECK_THROWS_AS(StateLock{state}, std::runtime_error);
    spit(dir.path / "b.json", batch_to_json(gaussian_batch(1, {1})).dump());
    std::ostringstream out, err;
    CHECK(cmd_monitor({state, dir.path / "b.json", std::nullopt, std::nullopt}, out, err) == kExitState);
    CHECK_FALSE(fs::exists(state));
  }
  CHECK_NOTHROW(StateLock{state});
}

TEST_CASE("batch parsing") {
  using nlohmann::json;
  CHECK_THROWS_AS(batch_from_json(json::parse(R"({"observations": [], "extra": 1})")), FormatError);
  CHECK_THROWS_AS(batch_from_json(json::parse(R"({})")), FormatError);
  CHECK_THROWS_AS(batch_from_json(json::parse(R"({"observations": [], "responses": {"item_ids": [], "rows": []}})")),
                  FormatError);
  CHECK_THROWS_AS(batch_from_json(json::parse(R"({"observations": [{"item_id": 1}]})")), FormatError);
  CHECK_THROWS_AS(batch_from_json(json::parse(R"({"responses": {"item_ids": [1, 2], "rows": ["101"]}, "anchor_ids": [1]})")),
                  FormatError);
  CHECK_THROWS_AS(batch_from_json(json::parse(R"({"responses": {"item_ids": [1, 2], "rows": ["1x"]}, "anchor_ids": [1]})")),
                  FormatError);
  CHECK_THROWS_AS(batch_from_json(json::parse(R"({"responses": {"item_ids": [1, 2], "rows": ["10"]}})")), FormatError);
  CHECK_THROWS_AS(batch_from_json(json::parse("[1, 2]")), FormatError);

  const BatchInput b = batch_from_json(json::parse(R"({"responses": {"item_ids": [4, 9], "rows": ["10", "01", "11"]},
                                                       "anchor_ids": [4], "remove_items": [2]})"));
  REQUIRE(b.responses);
  CHECK(b.responses->entries.rows() == 3);
  CHECK(b.responses->entries(1, 1) == 1);
  CHECK(b.responses->entries(1, 0) == 0);
  CHECK(b.anchor_ids == std::vector<ItemId>{4});
  CHECK(b.remove_items == std::vector<ItemId>{2});
  CHECK(batch_to_json(batch_from_json(batch_to_json(b))) == batch_to_json(b));

  BatchInput g = gaussian_batch(3, {5, 6});
  g.observations = {{5, 0.1 + 0.2, 0.0, 0.0}, {6, -1.0 / 3.0, 0.0, 0.0}};
  const BatchInput back = batch_from_json(json::parse(batch_to_json(g).dump()));
  CHECK(back.administration == 3);
  CHECK(back.add_items == g.add_items);
  CHECK(back.observations[0].x == g.observations[0].x);
  CHECK(back.observations[1].x == g.observations[1].x);
}

TEST_CASE("apply_batch on a fresh state") {
  std::optional<Monitor> m;
  BatchInput b = gaussian_batch(1, {1, 2, 3});
  b.observations = {{1, 0.3, 0.0, 0.0}, {2, 5.0, 0.0, 0.0}};
  const StepReport r = apply_batch(m, b, std::nullopt);
  REQUIRE(m);
  CHECK(m->time() == 1);
  CHECK(r.decision.detected.empty());
  for (const auto& s : r.scores) CHECK(s.score == 0.0);

  BatchInput next;
  next.administration = 2;
  next.observations = {{99, 0.0, 0.0, 0.0}};
  std::optional<Monitor> copy = m;
  CHECK_THROWS(apply_batch(copy, next, std::nullopt));
  CHECK(copy->time() == 1);
  next.observations.clear();
  next.administration = 5;
  CHECK_THROWS(apply_batch(copy, next, std::nullopt));
  next.administration = 2;
  next.statistic = StatisticKind::sir;
  CHECK_THROWS(apply_batch(copy, next, std::nullopt));

  std::optional<Monitor> none;
  BatchInput bare;
  CHECK_THROWS(apply_batch(none, bare, std::nullopt));
}

TEST_CASE("monitor command: state lifecycle, corrupt state and alpha override") {
  TempDir dir;
  const fs::path state = dir.path / "state.json";
  BatchInput first = gaussian_batch(1, {1, 2, 3, 4});
  first.observations = {{1, 0.0, 0.0, 0.0}, {2, 0.1, 0.0, 0.0}};
  spit(dir.path / "b1.json", batch_to_json(first).dump());
  std::ostringstream out, err;
  REQUIRE(cmd_monitor({state, dir.path / "b1.json", std::nullopt, std::nullopt}, out, err) == kExitOk);
  CHECK(count_lines(slurp(dir.path / "detections.csv")) == 5);

  BatchInput second;
  second.administration = 2;
  second.observations = {{1, 4.0, 0.0, 0.0}, {2, 4.5, 0.0, 0.0}, {3, 0.2, 0.0, 0.0}};
  spit(dir.path / "b2.json", batch_to_json(second).dump());
  const std::string before = slurp(state);
  CHECK(cmd_monitor({state, dir.path / "b2.json", 1.5, std::nullopt}, out, err) == kExitUsage);
  CHECK(slurp(state) == before);

  CHECK(run_cli("monitor --state " + state.string() + " --batch " + (dir.path / "b2.json").string() +
                    " --alpha 0.5 --report " + (dir.path / "loose.csv").string(),
                dir.path / "log.txt") == 0);
  const std::string loose = slurp(dir.path / "loose.csv");
  CHECK(read_snapshot(state).time() == 2);
  CHECK(read_snapshot(state).config().alpha == MonitorConfig{}.alpha);

  // Same step at the configured alpha from the saved time-1 state detects at least as much.
  spit(state, before);
  CHECK(run_cli("monitor --state " + state.string() + " --batch " + (dir.path / "b2.json").string() + " --report " +
                    (dir.path / "strict.csv").string(),
                dir.path / "log.txt") == 0);
  auto detected_count = [](const std::string& csv) {
    std::size_t n = 0;
    std::istringstream in(csv);
    for (std::string line; std::getline(in, line);) n += line.ends_with(",1") ? 1 : 0;
    return n;
  };
  CHECK(detected_count(slurp(dir.path / "strict.csv")) >= 2);
  CHECK(detected_count(loose) <= detected_count(slurp(dir.path / "strict.csv")));

  spit(state, "{ not json");
  const std::string corrupt = slurp(state);
  CHECK(run_cli("monitor --state " + state.string() + " --batch " + (dir.path / "b2.json").string(),
                dir.path / "log.txt") == kExitState);
  CHECK(slurp(state) == corrupt);

  spit(dir.path / "bad_batch.json", "{\"observations\": 3}");
  CHECK(run_cli("monitor --state " + (dir.path / "other.json").string() + " --batch " +
                    (dir.path / "bad_batch.json").string(),
                dir.path / "log.txt") == kExitUsage);
  CHECK_FALSE(fs::exists(dir.path / "other.json"));
}

TEST_CASE("simulate command: deterministic output files") {
  TempDir dir;
  spit(dir.path / "tiny.cfg", "study = gaussian_streams\nreplications = 1\nhorizon = 6\n");
  REQUIRE(run_cli("simulate --config " + (dir.path / "tiny.cfg").string() + " --out " + (dir.path / "a").string(),
                  dir.path / "log.txt") == 0);
  REQUIRE(run_cli("simulate --config " + (dir.path / "tiny.cfg").string() + " --out " + (dir.path / "b").string(),
                  dir.path / "log.txt") == 0);
  const std::string qa = slurp(dir.path / "a" / "quantiles.csv");
  CHECK(qa == slurp(dir.path / "b" / "quantiles.csv"));
  CHECK(slurp(dir.path / "a" / "trajectories.csv") == slurp(dir.path / "b" / "trajectories.csv"));
  CHECK(count_lines(qa) == 1 + 3 * 6);
  std::istringstream in(qa);
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,metric,q05,q25,q50,q75,q95");
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::vector<std::string> v;
    for (std::string c; std::getline(cells, c, ',');) v.push_back(c);
    REQUIRE(v.size() == 7);
    for (std::size_t i = 3; i < 7; ++i) CHECK(v[i] == v[2]);
  }

  spit(dir.path / "broken.cfg", "alpha = 2\n");
  CHECK(run_cli("simulate --config " + (dir.path / "broken.cfg").string() + " --out " + (dir.path / "c").string(),
                dir.path / "log.txt") == kExitUsage);
  CHECK(slurp(dir.path / "log.txt").find("alpha") != std::string::npos);
}

TEST_CASE("simulate command: bundled study has fifty rows per metric") {
  TempDir dir;
  REQUIRE(run_cli("simulate --config " + std::string(SEQMON_CONFIGS) + "/study1_known.cfg --out " + dir.path.string(),
                  dir.path / "log.txt") == 0);
  const std::string q = slurp(dir.path / "quantiles.csv");
  for (const char* metric : {",fnp,", ",fdp,", ",detections,"}) {
    std::size_t rows = 0;
    for (std::size_t pos = q.find(metric); pos != std::string::npos; pos = q.find(metric, pos + 1)) ++rows;
    CHECK(rows == 50);
  }
}

TEST_CASE("validate and usage exit codes") {
  TempDir dir;
  CHECK(run_cli("validate --suite nonsense", dir.path / "log.txt") == kExitUsage);
  CHECK(run_cli("validate --suite oracles", dir.path / "log.txt") == kExitOk);
  CHECK(slurp(dir.path / "log.txt").find("PASS") != std::string::npos);
  CHECK(run_cli("", dir.path / "log.txt") == kExitUsage);
  CHECK(run_cli("monitor --state x.json", dir.path / "log.txt") == kExitUsage);
}
