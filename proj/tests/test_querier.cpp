#include <catch_amalgamated.hpp>

#include "gridloc/querier.hpp"
#include "gridloc/scorer.hpp"
#include "test_support.hpp"

using namespace gridloc;

namespace {

LocalizationTask make_task(const std::string& id = "im1",
                           Pathology p = Pathology::Cardiomegaly,
                           ViewPosition::Kind view = ViewPosition::Kind::frontal,
                           GridSpec grid = {8, 8, 256}) {
  return LocalizationTask{
      id, p, {view, ViewPosition::FrontalSubtype::unknown}, grid};
}

/// Minimal env: constant fake image bytes, no overlap grids.
QueryEnv fake_env(std::uint64_t seed = 0) {
  QueryEnv env;
  env.seed = seed;
  env.render_png = [](const LocalizationTask& task) {
    return "png-bytes-for-" + task.image_id + "-" + task.grid.name();
  };
  return env;
}

}  // namespace

// ---------------------------------------------------------------------------
// build_prompt

TEST_CASE("build_prompt substitutes view and condition", "[querier]") {
  const auto bundle = build_prompt(make_task());
  REQUIRE_THAT(bundle.user_text,
               Catch::Matchers::ContainsSubstring("gridded frontal view"));
  REQUIRE_THAT(bundle.user_text, Catch::Matchers::ContainsSubstring(
                                     "'Cardiomegaly' is confirmed to be "
                                     "present in this image"));
  REQUIRE_THAT(bundle.system_text,
               Catch::Matchers::ContainsSubstring("frontal chest X-rays"));
  REQUIRE_THAT(bundle.user_text, Catch::Matchers::ContainsSubstring(
                                     "Identify the single grid cell"));
  REQUIRE(bundle.user_text.find("{view}") == std::string::npos);
  REQUIRE(bundle.user_text.find("{condition}") == std::string::npos);
}

TEST_CASE("build_prompt uses the lateral view word", "[querier]") {
  const auto bundle = build_prompt(
      make_task("im2", Pathology::PleuralEffusion, ViewPosition::Kind::lateral));
  REQUIRE_THAT(bundle.user_text,
               Catch::Matchers::ContainsSubstring("gridded lateral view"));
  REQUIRE_THAT(bundle.user_text,
               Catch::Matchers::ContainsSubstring("'Pleural Effusion'"));
  // the view word appears exactly once in the user text
  std::size_t count = 0, pos = 0;
  while ((pos = bundle.user_text.find("lateral", pos)) != std::string::npos) {
    ++count;
    pos += 7;
  }
  REQUIRE(count == 1);
}

TEST_CASE("prompt hashes are stable across calls", "[querier]") {
  const auto a = build_prompt(make_task());
  const auto b = build_prompt(make_task());
  REQUIRE(a.prompt_hash() == b.prompt_hash());
  const auto c = build_prompt(make_task("im1", Pathology::Edema));
  REQUIRE(a.prompt_hash() != c.prompt_hash());
}

// ---------------------------------------------------------------------------
// parse_cell

TEST_CASE("parse_cell handles the direct form", "[querier]") {
  const GridSpec spec{8, 8, 256};
  const auto parsed = parse_cell("C5", spec);
  REQUIRE(parsed.ok());
  REQUIRE(*parsed.cell == GridCell{2, 4});
  REQUIRE(parsed.label == "C5");
  REQUIRE_FALSE(parsed.ambiguous);
}

TEST_CASE("parse_cell tolerates prose and case", "[querier]") {
  const GridSpec spec{8, 8, 256};
  const auto parsed =
      parse_cell("The most representative cell is c5.", spec);
  REQUIRE(parsed.ok());
  REQUIRE(*parsed.cell == GridCell{2, 4});
}

TEST_CASE("parse_cell flags ambiguity and keeps the first", "[querier]") {
  const GridSpec spec{8, 8, 256};
  const auto parsed = parse_cell("Either B3 or D7, most likely B3.", spec);
  REQUIRE(parsed.ok());
  REQUIRE(*parsed.cell == GridCell{1, 2});
  REQUIRE(parsed.ambiguous);

  // repeated mentions of one coordinate are not ambiguous
  const auto repeat = parse_cell("C5. Yes, C5.", spec);
  REQUIRE(repeat.ok());
  REQUIRE_FALSE(repeat.ambiguous);
}

TEST_CASE("parse_cell reports out-of-range coordinates", "[querier]") {
  const GridSpec spec{8, 8, 256};
  const auto parsed = parse_cell("Z9", spec);
  REQUIRE_FALSE(parsed.ok());
  REQUIRE(parsed.failure == ParseFailure::out_of_range);

  // in-range wins over out-of-range mentions
  const auto mixed = parse_cell("H9 is outside, so D4.", spec);
  REQUIRE(mixed.ok());
  REQUIRE(*mixed.cell == GridCell{3, 3});
}

TEST_CASE("parse_cell rejects non-coordinates", "[querier]") {
  const GridSpec spec{8, 8, 256};
  for (const char* text :
       {"", "no idea", "gpt4 says hello", "42", "cell", "ABC123"}) {
    const auto parsed = parse_cell(text, spec);
    REQUIRE_FALSE(parsed.ok());
    REQUIRE(parsed.failure == ParseFailure::no_coordinate);
  }
}

TEST_CASE("parse_cell inverts label_of for every cell", "[querier][property]") {
  const GridSpec spec{16, 16, 256};
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      const auto parsed = parse_cell(label_of(spec, {r, c}), spec);
      REQUIRE(parsed.ok());
      REQUIRE(*parsed.cell == GridCell{r, c});
    }
  }
}

// ---------------------------------------------------------------------------
// simulated backends

TEST_CASE("uniform_random is deterministic per (seed, task)", "[querier]") {
  UniformRandomBackend backend;
  const auto task = make_task();
  const PromptBundle bundle;
  std::vector<std::string> first, second;
  for (std::uint64_t s = 0; s < 20; ++s) {
    first.push_back(backend.send(bundle, {task, nullptr, derive_seed(7, s)}).text);
  }
  for (std::uint64_t s = 0; s < 20; ++s) {
    second.push_back(backend.send(bundle, {task, nullptr, derive_seed(7, s)}).text);
  }
  REQUIRE(first == second);
  // and the draws do vary
  REQUIRE(std::set<std::string>(first.begin(), first.end()).size() > 1);
}

TEST_CASE("oracle picks the max-overlap cell", "[querier]") {
  const GridSpec spec{8, 8, 256};
  BinaryMask mask(256, 256);
  const auto rect = cell_rect(spec, {3, 3});
  for (int y = rect.row_start; y <= rect.row_end; ++y) {
    for (int x = rect.col_start; x <= rect.col_end; ++x) mask.set(x, y);
  }
  const OverlapGrid grid = overlap_fractions(mask, spec);
  OracleBackend backend;
  const auto reply = backend.send({}, {make_task(), &grid, 1});
  REQUIRE(reply.text == "D4");  // row 3 -> D, col 3 -> 4
}

TEST_CASE("noisy_oracle hits the oracle cell at the configured rate",
          "[querier][property]") {
  const GridSpec spec{8, 8, 256};
  BinaryMask mask(256, 256);
  const auto rect = cell_rect(spec, {2, 5});
  for (int y = rect.row_start; y <= rect.row_end; ++y) {
    for (int x = rect.col_start; x <= rect.col_end; ++x) mask.set(x, y);
  }
  const OverlapGrid grid = overlap_fractions(mask, spec);
  NoisyOracleBackend backend(0.7);
  const auto task = make_task();
  int oracle_hits = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const auto reply = backend.send({}, {task, &grid, derive_seed(99, t)});
    if (reply.text == "C6") ++oracle_hits;
  }
  const double freq = static_cast<double>(oracle_hits) / trials;
  REQUIRE(freq > 0.68);
  REQUIRE(freq < 0.72);
}

TEST_CASE("fixed_cell always replies with its label", "[querier]") {
  FixedCellBackend backend("E5");
  REQUIRE(backend.send({}, {make_task(), nullptr, 0}).text == "E5");
}

// ---------------------------------------------------------------------------
// run_queries and the cache journal

TEST_CASE("run_queries answers every task once and caches", "[querier]") {
  const auto dir = testsup::scratch_dir("querier_cache");
  std::vector<LocalizationTask> tasks;
  for (int i = 0; i < 8; ++i) {
    tasks.push_back(make_task("im" + std::to_string(i)));
  }
  BackendConfig cfg;
  cfg.id = "sim";
  cfg.simulator.type = "uniform_random";

  const auto records = run_queries(tasks, cfg, dir / "cache.jsonl", fake_env(3));
  REQUIRE(records.size() == 8);
  for (std::size_t i = 0; i < records.size(); ++i) {
    REQUIRE(records[i].task.image_id == tasks[i].image_id);
    REQUIRE(records[i].status == QueryStatus::ok);
    REQUIRE(records[i].parse.ok());
    REQUIRE(records[i].attempts == 1);
  }

  // warm rerun: same records, zero sends (checked via a scripted backend
  // that would fail if asked anything)
  SimulatorSpec poison;
  poison.actions.push_back({SimulatorSpec::Action::Kind::transient_error, ""});
  ScriptedBackend sentinel(poison);
  QueryEnv env = fake_env(3);
  env.backend_override = &sentinel;
  const auto again = run_queries(tasks, cfg, dir / "cache.jsonl", env);
  REQUIRE(again.size() == 8);
  REQUIRE(sentinel.sends() == 0);
  for (std::size_t i = 0; i < 8; ++i) {
    REQUIRE(again[i].raw_response == records[i].raw_response);
  }
}

TEST_CASE("run_queries retries transient failures with attempts logged",
          "[querier]") {
  const auto dir = testsup::scratch_dir("querier_flaky");
  SimulatorSpec flaky;
  flaky.actions.push_back({SimulatorSpec::Action::Kind::transient_error, ""});
  flaky.actions.push_back({SimulatorSpec::Action::Kind::transient_error, ""});
  flaky.actions.push_back({SimulatorSpec::Action::Kind::respond, "C5"});
  ScriptedBackend backend(flaky);

  BackendConfig cfg;
  cfg.id = "flaky";
  cfg.max_retries = 3;
  cfg.backoff_base_ms = 1;
  QueryEnv env = fake_env();
  env.backend_override = &backend;

  const auto records =
      run_queries({make_task()}, cfg, dir / "cache.jsonl", env);
  REQUIRE(records.size() == 1);
  REQUIRE(records[0].status == QueryStatus::ok);
  REQUIRE(records[0].attempts == 3);
  REQUIRE(records[0].raw_response == "C5");
}

TEST_CASE("run_queries records transport failure after retry exhaustion and "
          "retries it on rerun",
          "[querier]") {
  const auto dir = testsup::scratch_dir("querier_exhaust");
  BackendConfig cfg;
  cfg.id = "down";
  cfg.max_retries = 1;
  cfg.backoff_base_ms = 1;

  {
    SimulatorSpec down;
    down.actions.push_back({SimulatorSpec::Action::Kind::transient_error, ""});
    ScriptedBackend backend(down);
    QueryEnv env = fake_env();
    env.backend_override = &backend;
    const auto records = run_queries({make_task()}, cfg, dir / "cache.jsonl", env);
    REQUIRE(records.size() == 1);
    REQUIRE(records[0].status == QueryStatus::transport_error);
    REQUIRE(records[0].attempts == 2);  // first try + one retry
    REQUIRE(records[0].parse.failure == ParseFailure::transport_error);
  }
  {
    // the failure record does not satisfy the cache; rerun asks again
    SimulatorSpec up;
    up.actions.push_back({SimulatorSpec::Action::Kind::respond, "B2"});
    ScriptedBackend backend(up);
    QueryEnv env = fake_env();
    env.backend_override = &backend;
    const auto records = run_queries({make_task()}, cfg, dir / "cache.jsonl", env);
    REQUIRE(backend.sends() == 1);
    REQUIRE(records[0].status == QueryStatus::ok);
    REQUIRE(records[0].raw_response == "B2");
  }
}

TEST_CASE("scripted abort interrupts the run and preserves completed work",
          "[querier]") {
  const auto dir = testsup::scratch_dir("querier_abort");
  std::vector<LocalizationTask> tasks;
  for (int i = 0; i < 10; ++i) tasks.push_back(make_task("im" + std::to_string(i)));

  BackendConfig cfg;
  cfg.id = "scripted";
  SimulatorSpec spec;
  for (int i = 0; i < 4; ++i) {
    spec.actions.push_back({SimulatorSpec::Action::Kind::respond, "A1"});
  }
  spec.actions.push_back({SimulatorSpec::Action::Kind::abort, ""});
  ScriptedBackend first(spec);
  QueryEnv env = fake_env();
  env.backend_override = &first;

  REQUIRE_THROWS_AS(run_queries(tasks, cfg, dir / "cache.jsonl", env), RunInterrupted);
  REQUIRE(first.sends() == 5);  // 4 answered + the aborting call
  REQUIRE(CacheJournal::load(dir / "cache.jsonl").size() == 4);

  // resume: only the remaining 6 tasks are sent
  SimulatorSpec all_ok;
  all_ok.actions.push_back({SimulatorSpec::Action::Kind::respond, "B2"});
  ScriptedBackend second(all_ok);
  env.backend_override = &second;
  const auto records = run_queries(tasks, cfg, dir / "cache.jsonl", env);
  REQUIRE(second.sends() == 6);
  REQUIRE(records.size() == 10);
}

TEST_CASE("concurrent in-flight requests keep deterministic draws",
          "[querier]") {
  const auto dir = testsup::scratch_dir("querier_parallel");
  std::vector<LocalizationTask> tasks;
  for (int i = 0; i < 24; ++i) tasks.push_back(make_task("im" + std::to_string(i)));

  BackendConfig cfg;
  cfg.id = "par";
  cfg.simulator.type = "uniform_random";
  cfg.max_in_flight = 8;

  const auto a = run_queries(tasks, cfg, dir / "a.jsonl", fake_env(5));
  const auto b = run_queries(tasks, cfg, dir / "b.jsonl", fake_env(5));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].raw_response == b[i].raw_response);
  }
}

TEST_CASE("query records survive the journal round trip", "[querier]") {
  QueryRecord rec;
  rec.task = make_task("imX", Pathology::LungOpacity, ViewPosition::Kind::lateral,
                       {16, 16, 256});
  rec.backend_id = "b";
  rec.prompt_hash = "p";
  rec.image_hash = "i";
  rec.raw_response = "the answer is K12, not K13";
  rec.received_at = "2026-01-01T00:00:00Z";
  rec.attempts = 2;
  rec.parse = parse_cell(rec.raw_response, rec.task.grid);
  const QueryRecord back = query_record_from_json(to_json(rec));
  REQUIRE(back.cache_key() == rec.cache_key());
  REQUIRE(back.task.key() == rec.task.key());
  REQUIRE(back.raw_response == rec.raw_response);
  REQUIRE(back.parse.cell == rec.parse.cell);
  REQUIRE(back.parse.ambiguous == rec.parse.ambiguous);
  REQUIRE(back.attempts == 2);
}
