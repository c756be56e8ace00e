#pragma once

#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gridloc/corpus.hpp"
#include "gridloc/digest.hpp"
#include "gridloc/error.hpp"
#include "gridloc/grid.hpp"
#include "gridloc/rng.hpp"
#include "gridloc/scorer.hpp"

namespace gridloc {

// ---------------------------------------------------------------------------
// Prompt construction

// The query template. {view} is "frontal" or "lateral"; {condition} is the
// pathology's display name. The texts are byte-stable so prompt digests only
// change when the template itself does.
inline constexpr std::string_view kSystemPromptTemplate =
    "You are an expert chest radiologist specializing in analyzing {view} "
    "chest X-rays. Your task is to precisely localize abnormalities using a "
    "grid overlay.";

inline constexpr std::string_view kUserPromptTemplate =
    "This is a gridded {view} view of a chest X-ray. The abnormality "
    "'{condition}' is confirmed to be present in this image.\n"
    "Your task:\n"
    "1. Identify the single grid cell where this abnormality - '{condition}' "
    "is the MOST prominent.\n"
    "2. Provide only the grid coordinate for this most representative cell. "
    "A grid coordinate is defined as a letter followed by a number. If the "
    "abnormality spans multiple cells, choose the cell that is most "
    "representative.\n"
    "3. Do not include any explanations or additional text in your response.";

namespace detail {
inline std::string replace_all(std::string text, std::string_view what,
                               std::string_view with) {
  std::size_t pos = 0;
  while ((pos = text.find(what, pos)) != std::string::npos) {
    text.replace(pos, what.size(), with);
    pos += with.size();
  }
  return text;
}
}  // namespace detail

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  std::string image_png;  // rendered grid overlay

  std::string prompt_hash() const {
    return sha256_hex(system_text + "\x1f" + user_text);
  }
  std::string image_hash() const { return sha256_hex(image_png); }
};

inline PromptBundle build_prompt(const LocalizationTask& task,
                                 std::string image_png = {}) {
  PromptBundle bundle;
  bundle.system_text = detail::replace_all(std::string(kSystemPromptTemplate),
                                           "{view}", task.view.word());
  bundle.user_text = detail::replace_all(
      detail::replace_all(std::string(kUserPromptTemplate), "{view}",
                          task.view.word()),
      "{condition}", display_name(task.pathology));
  bundle.image_png = std::move(image_png);
  return bundle;
}

/// Digest of the template texts; recorded in run manifests so cached
/// responses can be tied to the exact prompt wording.
inline std::string prompt_template_digest() {
  return sha256_hex(std::string(kSystemPromptTemplate) + "\x1f" +
                    std::string(kUserPromptTemplate));
}

// ---------------------------------------------------------------------------
// Response parsing

enum class ParseFailure { no_coordinate, out_of_range, transport_error };

inline const char* parse_failure_string(ParseFailure f) {
  switch (f) {
    case ParseFailure::no_coordinate: return "no_coordinate";
    case ParseFailure::out_of_range: return "out_of_range";
    case ParseFailure::transport_error: return "transport_error";
  }
  throw Error("unknown parse failure");
}

struct CellParse {
  std::optional<GridCell> cell;
  bool ambiguous = false;  // several distinct in-range coordinates seen
  std::optional<ParseFailure> failure;
  std::string label;  // normalized label when parsed

  bool ok() const { return cell.has_value(); }
};

/// Scans a model response for grid coordinates: one or two letters followed
/// by digits, case-insensitive, delimited by non-alphanumerics. If exactly
/// one distinct in-range coordinate appears it is returned; if several, the
/// first is returned with the ambiguity flag set; tokens that only parse to
/// out-of-range cells yield an out_of_range failure.
inline CellParse parse_cell(std::string_view raw, const GridSpec& spec) {
  CellParse result;
  std::vector<GridCell> in_range;  // distinct, in order of appearance
  bool saw_out_of_range = false;

  const auto alnum = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
  };
  std::size_t i = 0;
  const std::size_t n = raw.size();
  while (i < n) {
    if (!std::isalpha(static_cast<unsigned char>(raw[i])) ||
        (i > 0 && alnum(raw[i - 1]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && std::isalpha(static_cast<unsigned char>(raw[j]))) ++j;
    std::size_t k = j;
    while (k < n && std::isdigit(static_cast<unsigned char>(raw[k]))) ++k;
    if (k == j || (k < n && alnum(raw[k]))) {  // no digits, or run continues
      i = k > j ? k : j;
      continue;
    }
    const auto cell = parse_label(raw.substr(i, k - i));
    if (cell) {
      if (spec.contains(*cell)) {
        if (std::find(in_range.begin(), in_range.end(), *cell) == in_range.end()) {
          in_range.push_back(*cell);
        }
      } else {
        saw_out_of_range = true;
      }
    }
    i = k;
  }

  if (in_range.empty()) {
    result.failure = saw_out_of_range ? ParseFailure::out_of_range
                                      : ParseFailure::no_coordinate;
    return result;
  }
  result.cell = in_range.front();
  result.ambiguous = in_range.size() > 1;
  result.label = label_of(spec, *result.cell);
  return result;
}

// ---------------------------------------------------------------------------
// Backend configuration

enum class BackendKind { http_chat, simulated };

/// Simulated predictor wiring; `type` selects the behavior.
struct SimulatorSpec {
  std::string type = "uniform_random";  // uniform_random | oracle |
                                        // noisy_oracle | fixed_cell | scripted
  double p_correct = 0.7;               // noisy_oracle
  std::string fixed_label = "A1";       // fixed_cell

  // scripted: actions consumed one per send, cycling when exhausted.
  struct Action {
    enum class Kind { respond, transient_error, abort } kind = Kind::respond;
    std::string text;
  };
  std::vector<Action> actions;
  std::optional<std::filesystem::path> counter_file;  // send count, one line per run
};

struct BackendConfig {
  std::string id;
  BackendKind kind = BackendKind::simulated;

  // http_chat
  std::string endpoint;  // full chat-completions URL
  std::string model;
  std::optional<double> temperature;         // passed through verbatim
  std::optional<std::string> reasoning_effort;  // passed through verbatim
  std::string credential_env;  // name of the env var holding the API key
  double timeout_s = 120.0;

  // retry / pacing
  int max_retries = 3;  // extra attempts after the first
  int min_request_interval_ms = 0;
  int max_in_flight = 1;
  int backoff_base_ms = 500;

  // simulated
  SimulatorSpec simulator;
  std::optional<std::uint64_t> seed;  // defaults to the run seed

  void validate() const {
    if (id.empty()) throw Error("backend id must not be empty");
    if (temperature && (*temperature < 0.0 || *temperature > 2.0)) {
      throw Error("temperature must be in [0, 2]");
    }
    if (max_in_flight < 1) throw Error("max_in_flight must be >= 1");
    if (max_retries < 0) throw Error("max_retries must be >= 0");
    if (kind == BackendKind::http_chat && endpoint.empty()) {
      throw Error("http_chat backend needs an endpoint");
    }
  }
};

// ---------------------------------------------------------------------------
// Query records and the cache journal

inline std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  return buf;
}

enum class QueryStatus { ok, transport_error };

struct QueryRecord {
  LocalizationTask task;
  std::string backend_id;
  std::string prompt_hash;
  std::string image_hash;
  std::string raw_response;
  std::string received_at;
  QueryStatus status = QueryStatus::ok;
  int attempts = 1;
  CellParse parse;

  std::string cache_key() const {
    return backend_id + "\x1f" + image_hash + "\x1f" + prompt_hash;
  }
};

inline constexpr const char* kCacheSchema = "gridloc.cache.v1";

inline nlohmann::json to_json(const QueryRecord& rec) {
  nlohmann::json j{
      {"schema", kCacheSchema},
      {"backend", rec.backend_id},
      {"image_id", rec.task.image_id},
      {"pathology", slug(rec.task.pathology)},
      {"view", view_string(rec.task.view)},
      {"grid",
       {{"rows", rec.task.grid.rows},
        {"cols", rec.task.grid.cols},
        {"canvas_side", rec.task.grid.canvas_side}}},
      {"prompt_sha256", rec.prompt_hash},
      {"image_sha256", rec.image_hash},
      {"status", rec.status == QueryStatus::ok ? "ok" : "transport_error"},
      {"attempts", rec.attempts},
      {"received_at", rec.received_at},
      {"raw_response", rec.raw_response},
  };
  if (rec.parse.ok()) {
    j["parse"] = {{"ok", true},
                  {"label", rec.parse.label},
                  {"row", rec.parse.cell->row},
                  {"col", rec.parse.cell->col},
                  {"ambiguous", rec.parse.ambiguous}};
  } else {
    j["parse"] = {{"ok", false},
                  {"reason", parse_failure_string(*rec.parse.failure)}};
  }
  return j;
}

inline QueryRecord query_record_from_json(const nlohmann::json& j) {
  QueryRecord rec;
  rec.backend_id = j.at("backend").get<std::string>();
  rec.task.image_id = j.at("image_id").get<std::string>();
  const auto pathology = parse_pathology(j.at("pathology").get<std::string>());
  if (!pathology) throw Error("cache record has unknown pathology");
  rec.task.pathology = *pathology;
  rec.task.view = parse_view(j.at("view").get<std::string>());
  rec.task.grid.rows = j.at("grid").at("rows").get<int>();
  rec.task.grid.cols = j.at("grid").at("cols").get<int>();
  rec.task.grid.canvas_side = j.at("grid").at("canvas_side").get<int>();
  rec.prompt_hash = j.at("prompt_sha256").get<std::string>();
  rec.image_hash = j.at("image_sha256").get<std::string>();
  rec.status = j.at("status").get<std::string>() == "ok"
                   ? QueryStatus::ok
                   : QueryStatus::transport_error;
  rec.attempts = j.at("attempts").get<int>();
  rec.received_at = j.at("received_at").get<std::string>();
  rec.raw_response = j.at("raw_response").get<std::string>();
  const auto& parse = j.at("parse");
  if (parse.at("ok").get<bool>()) {
    rec.parse.cell = GridCell{parse.at("row").get<int>(), parse.at("col").get<int>()};
    rec.parse.label = parse.at("label").get<std::string>();
    rec.parse.ambiguous = parse.at("ambiguous").get<bool>();
  } else {
    const std::string reason = parse.at("reason").get<std::string>();
    if (reason == "out_of_range") {
      rec.parse.failure = ParseFailure::out_of_range;
    } else if (reason == "transport_error") {
      rec.parse.failure = ParseFailure::transport_error;
    } else {
      rec.parse.failure = ParseFailure::no_coordinate;
    }
  }
  return rec;
}

/// Append-only newline-delimited journal of QueryRecords. Appends are
/// serialized through one writer; loading keeps the latest record per cache
/// key and tolerates a truncated final line (interrupted runs).
class CacheJournal {
 public:
  explicit CacheJournal(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) {
      std::filesystem::create_directories(path_.parent_path());
    }
    out_.open(path_, std::ios::app);
    if (!out_) throw Error("cache journal unwritable: " + path_.string());
  }

  void append(const QueryRecord& rec) {
    const std::string line = to_json(rec).dump();
    std::lock_guard lock(mutex_);
    out_ << line << '\n';
    out_.flush();
    if (!out_) throw Error("cache journal write failed: " + path_.string());
  }

  static std::map<std::string, QueryRecord> load(
      const std::filesystem::path& path) {
    std::map<std::string, QueryRecord> records;
    std::ifstream in(path);
    if (!in) return records;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        QueryRecord rec = query_record_from_json(nlohmann::json::parse(line));
        std::string key = rec.cache_key();
        records.insert_or_assign(std::move(key), std::move(rec));
      } catch (...) {
        // tolerate a torn tail line from an interrupted run
        continue;
      }
    }
    return records;
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Backends

struct BackendReply {
  enum class Status { ok, transient_error, permanent_error, auth_error, interrupted };
  Status status = Status::ok;
  std::string text;
  std::string detail;
};

/// Per-task inputs a backend may consult. The draw seed is derived from
/// (run seed, backend id, task identity) so concurrent scheduling never
/// changes simulated outputs.
struct TaskContext {
  const LocalizationTask& task;
  const OverlapGrid* overlap = nullptr;  // required by oracle simulators
  std::uint64_t draw_seed = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendReply send(const PromptBundle& bundle, const TaskContext& ctx) = 0;
  /// Called once when a run finishes (including interrupted runs).
  virtual void on_run_end() {}
};

namespace detail {

inline GridCell oracle_cell(const OverlapGrid& grid) {
  // maximal overlap fraction, ties broken in row-major order
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.fraction.size(); ++i) {
    if (grid.fraction[i] > grid.fraction[best]) best = i;
  }
  return {static_cast<int>(best) / grid.spec.cols,
          static_cast<int>(best) % grid.spec.cols};
}

}  // namespace detail

/// Draws one cell uniformly over all rows x cols cells.
class UniformRandomBackend : public Backend {
 public:
  BackendReply send(const PromptBundle&, const TaskContext& ctx) override {
    Rng rng(ctx.draw_seed);
    const int cells = ctx.task.grid.cell_count();
    const int pick = static_cast<int>(rng.below(cells));
    return {BackendReply::Status::ok,
            label_of(ctx.task.grid, {pick / ctx.task.grid.cols,
                                     pick % ctx.task.grid.cols})};
  }
};

/// Replies with the cell of maximal mask overlap; always a hit.
class OracleBackend : public Backend {
 public:
  BackendReply send(const PromptBundle&, const TaskContext& ctx) override {
    if (ctx.overlap == nullptr) {
      throw Error("oracle backend needs the task's overlap grid");
    }
    return {BackendReply::Status::ok,
            label_of(ctx.task.grid, detail::oracle_cell(*ctx.overlap))};
  }
};

/// Oracle cell with probability p_correct, otherwise a uniform non-oracle cell.
class NoisyOracleBackend : public Backend {
 public:
  explicit NoisyOracleBackend(double p_correct) : p_correct_(p_correct) {
    if (p_correct < 0.0 || p_correct > 1.0) {
      throw Error("noisy_oracle p_correct must be in [0, 1]");
    }
  }

  BackendReply send(const PromptBundle&, const TaskContext& ctx) override {
    if (ctx.overlap == nullptr) {
      throw Error("noisy_oracle backend needs the task's overlap grid");
    }
    Rng rng(ctx.draw_seed);
    const GridCell oracle = detail::oracle_cell(*ctx.overlap);
    GridCell pick = oracle;
    if (!rng.bernoulli(p_correct_)) {
      const int cells = ctx.task.grid.cell_count();
      const int oracle_index = oracle.row * ctx.task.grid.cols + oracle.col;
      int k = static_cast<int>(rng.below(cells - 1));
      if (k >= oracle_index) ++k;
      pick = {k / ctx.task.grid.cols, k % ctx.task.grid.cols};
    }
    return {BackendReply::Status::ok, label_of(ctx.task.grid, pick)};
  }

 private:
  double p_correct_;
};

/// Always replies with the configured label, valid for the grid or not.
class FixedCellBackend : public Backend {
 public:
  explicit FixedCellBackend(std::string label) : label_(std::move(label)) {}
  BackendReply send(const PromptBundle&, const TaskContext&) override {
    return {BackendReply::Status::ok, label_};
  }

 private:
  std::string label_;
};

/// Replays canned actions one per send (cycling when exhausted): respond
/// with a text, fail transiently, or abort the run. The send counter is the
/// hook for resume-semantics checks.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(SimulatorSpec spec) : spec_(std::move(spec)) {
    if (spec_.actions.empty()) {
      throw Error("scripted backend needs at least one action");
    }
  }

  BackendReply send(const PromptBundle&, const TaskContext&) override {
    const std::size_t n = sends_.fetch_add(1);
    const auto& action = spec_.actions[n % spec_.actions.size()];
    switch (action.kind) {
      case SimulatorSpec::Action::Kind::respond:
        return {BackendReply::Status::ok, action.text};
      case SimulatorSpec::Action::Kind::transient_error:
        return {BackendReply::Status::transient_error, "", "scripted failure"};
      case SimulatorSpec::Action::Kind::abort:
        return {BackendReply::Status::interrupted, "", "scripted abort"};
    }
    throw Error("unknown scripted action");
  }

  void on_run_end() override {
    if (!spec_.counter_file) return;
    std::ofstream out(*spec_.counter_file, std::ios::app);
    out << sends_.load() << '\n';
  }

  std::size_t sends() const { return sends_.load(); }

 private:
  SimulatorSpec spec_;
  std::atomic<std::size_t> sends_{0};
};

inline std::unique_ptr<Backend> make_simulated_backend(const BackendConfig& cfg) {
  const auto& sim = cfg.simulator;
  if (sim.type == "uniform_random") return std::make_unique<UniformRandomBackend>();
  if (sim.type == "oracle") return std::make_unique<OracleBackend>();
  if (sim.type == "noisy_oracle") {
    return std::make_unique<NoisyOracleBackend>(sim.p_correct);
  }
  if (sim.type == "fixed_cell") {
    return std::make_unique<FixedCellBackend>(sim.fixed_label);
  }
  if (sim.type == "scripted") return std::make_unique<ScriptedBackend>(sim);
  throw Error("unknown simulator type: " + sim.type);
}

// ---------------------------------------------------------------------------
// The run loop

struct QueryEnv {
  std::uint64_t seed = 0;
  /// Rendered grid-overlay PNG for a task (pipeline caches per image+grid).
  std::function<std::string(const LocalizationTask&)> render_png;
  /// Overlap grid provider; required for oracle-family simulators.
  std::function<const OverlapGrid*(const LocalizationTask&)> overlap_grid;
  std::function<void(const std::string&)> log;
  /// Test hook: use this backend instead of constructing one from config.
  Backend* backend_override = nullptr;
};

namespace detail {

class RateLimiter {
 public:
  explicit RateLimiter(int interval_ms) : interval_(interval_ms) {}

  void acquire() {
    if (interval_.count() <= 0) return;
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mutex_);
      const auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_);
      next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  std::chrono::milliseconds interval_;
  std::chrono::steady_clock::time_point next_;
  std::mutex mutex_;
};

}  // namespace detail

/// Runs every task not already answered in the cache journal. Transient
/// failures are retried up to max_retries extra attempts with exponential
/// backoff; a task that exhausts its retries is recorded as a transport
/// failure and the run continues. Transport-failure records are journaled
/// for audit but do not satisfy the cache, so a rerun retries them.
/// Authentication failures abort the whole backend lane.
inline std::vector<QueryRecord> run_queries(
    const std::vector<LocalizationTask>& tasks, const BackendConfig& cfg,
    const std::filesystem::path& cache_path, const QueryEnv& env) {
  cfg.validate();
  if (!env.render_png) throw Error("run_queries needs a render source");
  const auto log = env.log ? env.log : [](const std::string&) {};

  auto cached = CacheJournal::load(cache_path);
  CacheJournal journal(cache_path);

  std::unique_ptr<Backend> owned;
  Backend* backend = env.backend_override;
  if (backend == nullptr) {
    if (cfg.kind != BackendKind::simulated) {
      throw Error("backend kind requires a constructed client; use "
                  "make_backend or an override");
    }
    owned = make_simulated_backend(cfg);
    backend = owned.get();
  }

  struct Pending {
    std::size_t task_index;
    PromptBundle bundle;
    std::string prompt_hash;
    std::string image_hash;
  };
  std::vector<std::optional<QueryRecord>> records(tasks.size());
  std::vector<Pending> pending;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    PromptBundle bundle = build_prompt(tasks[i], env.render_png(tasks[i]));
    Pending p{i, std::move(bundle), "", ""};
    p.prompt_hash = p.bundle.prompt_hash();
    p.image_hash = p.bundle.image_hash();
    const std::string key =
        cfg.id + "\x1f" + p.image_hash + "\x1f" + p.prompt_hash;
    const auto it = cached.find(key);
    if (it != cached.end() && it->second.status == QueryStatus::ok) {
      records[i] = it->second;
      records[i]->task = tasks[i];
    } else {
      pending.push_back(std::move(p));
    }
  }

  detail::RateLimiter limiter(cfg.min_request_interval_ms);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex failure_mutex;
  std::exception_ptr fatal;

  const auto worker = [&]() {
    while (!stop.load()) {
      const std::size_t w = next.fetch_add(1);
      if (w >= pending.size()) return;
      const Pending& p = pending[w];
      const LocalizationTask& task = tasks[p.task_index];
      const std::uint64_t draw_seed = derive_seed(
          cfg.seed.value_or(env.seed), fnv1a64(cfg.id + "\x1f" + task.key()));
      TaskContext ctx{task, env.overlap_grid ? env.overlap_grid(task) : nullptr,
                      draw_seed};

      QueryRecord rec;
      rec.task = task;
      rec.backend_id = cfg.id;
      rec.prompt_hash = p.prompt_hash;
      rec.image_hash = p.image_hash;

      int attempts = 0;
      for (;;) {
        if (stop.load()) return;
        limiter.acquire();
        BackendReply reply;
        try {
          reply = backend->send(p.bundle, ctx);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!fatal) fatal = std::current_exception();
          stop.store(true);
          return;
        }
        ++attempts;
        if (reply.status == BackendReply::Status::ok) {
          rec.raw_response = reply.text;
          rec.status = QueryStatus::ok;
          rec.parse = parse_cell(reply.text, task.grid);
          break;
        }
        if (reply.status == BackendReply::Status::auth_error) {
          std::lock_guard lock(failure_mutex);
          if (!fatal) {
            fatal = std::make_exception_ptr(
                AuthError("backend '" + cfg.id + "' authentication failed: " +
                          reply.detail));
          }
          stop.store(true);
          return;
        }
        if (reply.status == BackendReply::Status::interrupted) {
          std::lock_guard lock(failure_mutex);
          if (!fatal) {
            fatal = std::make_exception_ptr(RunInterrupted(
                "backend '" + cfg.id + "' interrupted: " + reply.detail));
          }
          stop.store(true);
          return;
        }
        const bool retryable =
            reply.status == BackendReply::Status::transient_error &&
            attempts <= cfg.max_retries;
        if (!retryable) {
          rec.raw_response.clear();
          rec.status = QueryStatus::transport_error;
          rec.parse.failure = ParseFailure::transport_error;
          log("task " + task.key() + " failed after " +
              std::to_string(attempts) + " attempt(s): " + reply.detail);
          break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(
            cfg.backoff_base_ms > 0 ? cfg.backoff_base_ms << (attempts - 1) : 0));
      }
      rec.attempts = attempts;
      rec.received_at = timestamp_utc();
      journal.append(rec);
      records[p.task_index] = std::move(rec);
    }
  };

  const std::size_t n_workers = std::min<std::size_t>(
      static_cast<std::size_t>(cfg.max_in_flight), pending.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  backend->on_run_end();
  if (fatal) std::rethrow_exception(fatal);

  std::vector<QueryRecord> out;
  out.reserve(tasks.size());
  for (auto& r : records) {
    if (!r) throw Error("internal: task without a record");
    out.push_back(std::move(*r));
  }
  return out;
}

}  // namespace gridloc
