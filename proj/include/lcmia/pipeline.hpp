#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "lcmia/attacks.hpp"
#include "lcmia/corpus.hpp"
#include "lcmia/evaluation.hpp"
#include "lcmia/gateway.hpp"
#include "lcmia/http_gateway.hpp"
#include "lcmia/meta_classifier.hpp"
#include "lcmia/prompt.hpp"
#include "lcmia/simulator.hpp"
#include "lcmia/synthetic.hpp"

// Pipeline stages behind the command-line tool. Stages talk to each other
// only through files in the output directory.
namespace lcmia::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct ContextPreset {
  std::string_view name;
  std::size_t total_docs;
  std::size_t gold_index;
};

// {10,20,30}-document QA with the gold document in the middle.
inline constexpr std::array<ContextPreset, 3> kPresets{{
    {"nq-10-mid", 10, 5},
    {"nq-20-mid", 20, 10},
    {"nq-30-mid", 30, 15},
}};

inline const ContextPreset& find_preset(std::string_view name) {
  for (const auto& p : kPresets)
    if (p.name == name) return p;
  throw ValidationError("unknown context preset '" + std::string(name) + "'");
}

struct RunConfig {
  // gateway
  std::string backend = "simulator";  // simulator | live
  HttpGatewayConfig http;
  std::size_t parallelism = 4;
  std::string embedding = "local";  // local | remote
  std::size_t embedding_dim = 64;
  std::size_t embedding_window = 2;
  RemoteEmbedderConfig remote_embedding;
  SimulatorParams simulator;

  // corpus
  fs::path members_path;
  fs::path nonmembers_path;
  std::optional<fs::path> questions_path;
  std::optional<fs::path> templates_dir;

  // context
  std::string preset = "custom";
  std::size_t total_docs = 30;
  std::optional<std::size_t> gold_index = 15;  // nullopt: uniform per context

  // sampling
  std::size_t n_reference = 1000;
  std::size_t n_test = 1000;

  std::vector<AttackKind> attacks{AttackKind::Logits, AttackKind::Loss, AttackKind::Inquiry,
                                  AttackKind::Bert, AttackKind::Bleu};
  AttackConfig attack;
  CalibrationObjective calibration = CalibrationObjective::Accuracy;
  TrainingHyper meta;
  std::size_t density_bins = 50;
  bool report_auc = false;

  std::uint64_t seed = 0;
  fs::path output_dir;

  void validate() const {
    if (backend != "simulator" && backend != "live")
      throw ValidationError("gateway.backend must be 'simulator' or 'live'");
    if (embedding != "local" && embedding != "remote")
      throw ValidationError("gateway.embedding must be 'local' or 'remote'");
    auto must_exist = [](const fs::path& p, const char* what) {
      if (p.empty()) throw ValidationError(std::string(what) + " is not set");
      if (!fs::exists(p)) throw ValidationError(std::string(what) + " not found: " + p.string());
    };
    must_exist(members_path, "corpus.members");
    must_exist(nonmembers_path, "corpus.nonmembers");
    if (questions_path) must_exist(*questions_path, "corpus.questions");
    if (templates_dir) must_exist(*templates_dir, "prompts.templates");
    if (total_docs < 1) throw ValidationError("context.total_docs must be >= 1");
    if (gold_index && (*gold_index < 1 || *gold_index > total_docs))
      throw ValidationError("context.gold_index out of range");
    if (output_dir.empty()) throw ValidationError("output_dir is not set");
    if (attack.split_k < 2) throw ValidationError("split.k must be >= 2");
    simulator.validate();
  }
};

namespace detail {

template <typename T>
void read_opt(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline void reject_secrets(const json& j, const std::string& where) {
  if (!j.is_object()) return;
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto key = lcmia::detail::lower(it.key());
    if (key.find("api_key") != std::string::npos || key.find("apikey") != std::string::npos ||
        key.find("token") == 0 || key.find("secret") != std::string::npos)
      throw ValidationError("credentials are read from the environment only; remove '" + where +
                            it.key() + "' from the config");
    reject_secrets(it.value(), where + it.key() + ".");
  }
}

}  // namespace detail

// Relative paths are resolved against `base_dir` (the config file's folder).
inline RunConfig config_from_json(const json& j, const fs::path& base_dir) {
  detail::reject_secrets(j, "");
  RunConfig c;
  if (!j.contains("seed")) throw ValidationError("config must set an explicit 'seed'");
  c.seed = j.at("seed").get<std::uint64_t>();

  const json gw = j.value("gateway", json::object());
  detail::read_opt(gw, "backend", c.backend);
  detail::read_opt(gw, "endpoint", c.http.endpoint);
  detail::read_opt(gw, "completions_path", c.http.completions_path);
  detail::read_opt(gw, "model", c.http.model);
  detail::read_opt(gw, "parallelism", c.parallelism);
  detail::read_opt(gw, "max_retries", c.http.max_retries);
  detail::read_opt(gw, "check_determinism", c.http.check_determinism);
  if (gw.contains("timeout_s")) c.http.timeout = std::chrono::seconds(gw["timeout_s"].get<int>());
  detail::read_opt(gw, "embedding", c.embedding);
  detail::read_opt(gw, "embedding_dim", c.embedding_dim);
  detail::read_opt(gw, "embedding_window", c.embedding_window);
  detail::read_opt(gw, "embedding_endpoint", c.remote_embedding.endpoint);
  detail::read_opt(gw, "embedding_path", c.remote_embedding.path);
  c.http.parallelism = c.parallelism;
  if (const char* key = std::getenv("LCMIA_API_KEY")) {
    c.http.api_key = key;
    c.remote_embedding.api_key = key;
  }

  const json sim = j.value("simulator", json::object());
  detail::read_opt(sim, "member_token_logprob_mean", c.simulator.member_token_logprob_mean);
  detail::read_opt(sim, "member_logprob_jitter", c.simulator.member_logprob_jitter);
  detail::read_opt(sim, "nonmember_token_logprob_mean", c.simulator.nonmember_token_logprob_mean);
  detail::read_opt(sim, "nonmember_logprob_jitter", c.simulator.nonmember_logprob_jitter);
  detail::read_opt(sim, "retrieval_failure_rate", c.simulator.retrieval_failure_rate);
  detail::read_opt(sim, "p_yes_given_member", c.simulator.p_yes_given_member);
  detail::read_opt(sim, "p_yes_given_nonmember", c.simulator.p_yes_given_nonmember);
  c.simulator.seed = sim.value("seed", c.seed);

  const json corpus = j.value("corpus", json::object());
  c.members_path = detail::resolve(base_dir, corpus.value("members", ""));
  c.nonmembers_path = detail::resolve(base_dir, corpus.value("nonmembers", ""));
  if (corpus.contains("questions")) c.questions_path = detail::resolve(base_dir, corpus["questions"].get<std::string>());
  if (j.contains("prompts") && j["prompts"].contains("templates"))
    c.templates_dir = detail::resolve(base_dir, j["prompts"]["templates"].get<std::string>());

  const json ctx = j.value("context", json::object());
  if (ctx.contains("preset")) {
    const auto& p = find_preset(ctx["preset"].get<std::string>());
    c.preset = std::string(p.name);
    c.total_docs = p.total_docs;
    c.gold_index = p.gold_index;
  }
  detail::read_opt(ctx, "total_docs", c.total_docs);
  if (ctx.contains("gold_index")) {
    if (ctx["gold_index"].is_string() && ctx["gold_index"] == "uniform") c.gold_index.reset();
    else c.gold_index = ctx["gold_index"].get<std::size_t>();
  }

  const json sampling = j.value("sampling", json::object());
  detail::read_opt(sampling, "n_reference", c.n_reference);
  detail::read_opt(sampling, "n_test", c.n_test);

  if (j.contains("attacks")) {
    c.attacks.clear();
    for (const auto& a : j["attacks"]) c.attacks.push_back(attack_kind_from_string(a.get<std::string>()));
  }
  const json split = j.value("split", json::object());
  detail::read_opt(split, "k", c.attack.split_k);
  detail::read_opt(split, "token_inflation", c.attack.token_inflation);
  if (split.contains("unit") && split["unit"] != "word")
    throw ValidationError("split.unit: only 'word' is supported by the pipeline");
  if (split.contains("loss_mode")) {
    auto m = split["loss_mode"].get<std::string>();
    if (m == "echo") c.attack.loss_mode = LossMode::Echo;
    else if (m == "generated") c.attack.loss_mode = LossMode::Generated;
    else throw ValidationError("split.loss_mode must be 'echo' or 'generated'");
  }
  c.attack.seed = c.seed;

  const json eval = j.value("evaluation", json::object());
  if (eval.contains("calibration")) {
    auto o = eval["calibration"].get<std::string>();
    if (o == "accuracy") c.calibration = CalibrationObjective::Accuracy;
    else if (o == "f1") c.calibration = CalibrationObjective::F1;
    else throw ValidationError("evaluation.calibration must be 'accuracy' or 'f1'");
  }
  detail::read_opt(eval, "density_bins", c.density_bins);
  detail::read_opt(eval, "auc", c.report_auc);

  const json meta = j.value("meta", json::object());
  detail::read_opt(meta, "lr", c.meta.lr);
  detail::read_opt(meta, "epochs", c.meta.epochs);
  detail::read_opt(meta, "l2", c.meta.l2);
  c.meta.seed = c.seed;

  c.output_dir = detail::resolve(base_dir, j.value("output_dir", "out"));
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  auto c = config_from_json(j, fs::absolute(path).parent_path());
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Artifact I/O

inline std::vector<json> read_jsonl(const fs::path& path, bool tolerate_torn_tail = false) {
  std::vector<json> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  for (const auto& l : lines) {
    ++lineno;
    if (trim(l).empty()) continue;
    auto j = json::parse(l, nullptr, false);
    if (j.is_discarded()) {
      if (tolerate_torn_tail && lineno == lines.size()) {
        spdlog::warn("{}: ignoring torn final record", path.string());
        break;
      }
      throw ParseError(path.string() + ": malformed record", lineno);
    }
    rows.push_back(std::move(j));
  }
  return rows;
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

inline void write_jsonl_atomic(const fs::path& path, const std::vector<json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  write_text_atomic(path, text);
}

inline json context_to_json(const ContextSpec& c) {
  json docs = json::array();
  for (const auto& d : c.documents) docs.push_back({{"id", d.id}, {"title", d.title}, {"text", d.text}});
  return {{"id", c.id}, {"question", c.question}, {"gold_index", c.gold_index}, {"documents", docs}};
}

inline ContextSpec context_from_json(const json& j) {
  ContextSpec c;
  c.id = j.at("id").get<std::string>();
  c.question = j.at("question").get<std::string>();
  c.gold_index = j.at("gold_index").get<std::size_t>();
  for (const auto& d : j.at("documents"))
    c.documents.push_back({d.at("id").get<std::string>(), d.at("title").get<std::string>(),
                           d.at("text").get<std::string>()});
  c.validate();
  return c;
}

struct StagedTarget {
  TargetSample sample;
  std::string split;  // reference | test
};

inline json target_to_json(const StagedTarget& t) {
  return {{"sample_id", t.sample.id()},
          {"split", t.split},
          {"label", to_string(t.sample.label)},
          {"context_id", t.sample.source_context_id.value_or("")},
          {"document", {{"id", t.sample.document.id}, {"title", t.sample.document.title}, {"text", t.sample.document.text}}}};
}

inline StagedTarget target_from_json(const json& j) {
  StagedTarget t;
  t.split = j.at("split").get<std::string>();
  t.sample.label = membership_from_string(j.at("label").get<std::string>());
  const auto& d = j.at("document");
  t.sample.document = {d.at("id").get<std::string>(), d.at("title").get<std::string>(),
                       d.at("text").get<std::string>()};
  auto ctx = j.at("context_id").get<std::string>();
  if (!ctx.empty()) t.sample.source_context_id = ctx;
  return t;
}

struct Paths {
  fs::path root;
  fs::path contexts() const { return root / "contexts.jsonl"; }
  fs::path targets() const { return root / "targets.jsonl"; }
  fs::path manifest() const { return root / "manifest.json"; }
  fs::path prompts() const { return root / "prompts"; }
  fs::path outcomes() const { return root / "outcomes.jsonl"; }
  fs::path failures() const { return root / "failures.jsonl"; }
  fs::path features() const { return root / "features.jsonl"; }
  fs::path meta_model() const { return root / "meta_model.json"; }
  fs::path reports() const { return root / "reports"; }
  fs::path density() const { return root / "density"; }
};

inline PromptRenderer make_renderer(const RunConfig& c) {
  return c.templates_dir ? PromptRenderer(PromptTemplates::load(*c.templates_dir)) : PromptRenderer();
}

// Everything needed to reproduce a run; deliberately free of paths and clocks.
inline json run_metadata(const RunConfig& c) {
  const auto& s = c.simulator;
  json meta{
      {"seed", c.seed},
      {"backend", c.backend},
      {"preset", c.preset},
      {"total_docs", c.total_docs},
      {"gold_index", c.gold_index ? json(*c.gold_index) : json("uniform")},
      {"n_reference", c.n_reference},
      {"n_test", c.n_test},
      {"prompt_checksum", make_renderer(c).templates().checksum()},
      {"split_k", c.attack.split_k},
      {"split_unit", "word"},
      {"token_inflation", c.attack.token_inflation},
      {"loss_mode", to_string(c.attack.loss_mode)},
      {"probability_floor", c.attack.probability_floor},
      {"top_logprobs", c.attack.top_logprobs},
      {"embedding", c.embedding == "local"
                        ? LocalHashEmbedder(c.embedding_dim, c.embedding_window).mode()
                        : "remote(" + c.remote_embedding.endpoint + c.remote_embedding.path + ")"},
      {"bleu", "sacrebleu-compatible sentence BLEU, 13a tokenizer, exp smoothing, effective order"},
      {"bert", "greedy cosine matching F1, no idf, no baseline rescaling"},
      {"calibration", to_string(c.calibration)},
      {"feature_order_checksum", feature_order_checksum()},
  };
  if (c.backend == "simulator") {
    meta["simulator"] = {{"member_token_logprob_mean", s.member_token_logprob_mean},
                         {"member_logprob_jitter", s.member_logprob_jitter},
                         {"nonmember_token_logprob_mean", s.nonmember_token_logprob_mean},
                         {"nonmember_logprob_jitter", s.nonmember_logprob_jitter},
                         {"retrieval_failure_rate", s.retrieval_failure_rate},
                         {"p_yes_given_member", s.p_yes_given_member},
                         {"p_yes_given_nonmember", s.p_yes_given_nonmember},
                         {"seed", s.seed}};
  } else {
    meta["endpoint"] = c.http.endpoint;
    meta["model"] = c.http.model;
  }
  return meta;
}

// ---------------------------------------------------------------------------
// build-context

struct BuildSummary {
  std::size_t contexts = 0;
  std::size_t reference = 0;
  std::size_t test = 0;
  double mean_context_words = 0;
  std::size_t max_context_words = 0;
};

inline BuildSummary cmd_build_context(const RunConfig& c) {
  c.validate();
  Paths paths{c.output_dir};
  auto members_pool = load_documents(c.members_path);
  auto nonmembers_pool = load_documents(c.nonmembers_path);

  QuestionSource question = title_question_source();
  if (c.questions_path) {
    auto qs = std::make_shared<DocumentSet>(load_documents(*c.questions_path));
    question = [qs](const Document& gold) {
      if (qs->contains(gold.id)) return qs->at(gold.id).text;
      return title_question_source()(gold);
    };
  }

  const std::size_t per_class = (c.n_reference + c.n_test) / 2;
  const std::size_t n_contexts = std::max<std::size_t>(1, (per_class + c.total_docs - 1) / c.total_docs);
  auto contexts = build_contexts(members_pool, n_contexts, c.total_docs, c.gold_index, question,
                                 lcmia::detail::mix(c.seed, 0x637478));

  std::vector<TargetSample> members, nonmembers;
  for (const auto& ctx : contexts)
    for (const auto& d : ctx.documents) members.push_back({d, Membership::Member, ctx.id});
  for (const auto& d : nonmembers_pool) {
    auto ctx = contexts[lcmia::detail::mix(c.seed, lcmia::detail::fnv1a(d.id)) % contexts.size()].id;
    nonmembers.push_back({d, Membership::NonMember, ctx});
  }
  auto sets = sample_targets(members, nonmembers, c.n_reference, c.n_test,
                             lcmia::detail::mix(c.seed, 0x736d70));

  fs::create_directories(paths.prompts());
  auto renderer = make_renderer(c);
  std::vector<json> ctx_rows;
  BuildSummary summary;
  summary.contexts = contexts.size();
  for (const auto& ctx : contexts) {
    ctx_rows.push_back(context_to_json(ctx));
    auto system = renderer.render_system_prompt(ctx);
    write_text_atomic(paths.prompts() / (ctx.id + ".txt"), system + "\n");
    auto words = word_spans(system).size();
    summary.mean_context_words += static_cast<double>(words);
    summary.max_context_words = std::max(summary.max_context_words, words);
  }
  summary.mean_context_words /= static_cast<double>(contexts.size());
  write_jsonl_atomic(paths.contexts(), ctx_rows);

  std::vector<json> target_rows;
  for (const auto& t : sets.reference) target_rows.push_back(target_to_json({t, "reference"}));
  for (const auto& t : sets.test) target_rows.push_back(target_to_json({t, "test"}));
  write_jsonl_atomic(paths.targets(), target_rows);
  write_text_atomic(paths.manifest(), run_metadata(c).dump(2) + "\n");

  summary.reference = sets.reference.size();
  summary.test = sets.test.size();
  spdlog::info("built {} contexts of {} documents (gold at {}); {:.0f} words per prompt on average, {} max",
               summary.contexts, c.total_docs,
               c.gold_index ? std::to_string(*c.gold_index) : std::string("uniform"),
               summary.mean_context_words, summary.max_context_words);
  spdlog::info("sampled {} reference and {} test targets", summary.reference, summary.test);
  return summary;
}

// ---------------------------------------------------------------------------
// Shared loading for later stages

struct Staged {
  std::map<std::string, ContextSpec> contexts;
  std::vector<StagedTarget> targets;

  const ContextSpec& context_of(const StagedTarget& t) const {
    auto it = contexts.find(t.sample.source_context_id.value_or(""));
    if (it == contexts.end()) throw ValidationError("target " + t.sample.id() + " has no context");
    return it->second;
  }
  std::vector<ContextSpec> context_list() const {
    std::vector<ContextSpec> v;
    for (const auto& [id, c] : contexts) v.push_back(c);
    return v;
  }
};

inline Staged load_staged(const RunConfig& c) {
  Paths paths{c.output_dir};
  if (!fs::exists(paths.contexts()) || !fs::exists(paths.targets()))
    throw ValidationError("missing context artifacts in " + c.output_dir.string() + "; run build-context first");
  Staged s;
  for (const auto& row : read_jsonl(paths.contexts())) {
    auto ctx = context_from_json(row);
    s.contexts.emplace(ctx.id, std::move(ctx));
  }
  for (const auto& row : read_jsonl(paths.targets())) s.targets.push_back(target_from_json(row));
  return s;
}

struct Backend {
  std::unique_ptr<ModelGateway> gateway;
  std::unique_ptr<EmbeddingProvider> embedder;
};

inline Backend make_backend(const RunConfig& c, const Staged& staged) {
  Backend b;
  if (c.backend == "simulator")
    b.gateway = std::make_unique<SimulatorGateway>(staged.context_list(), c.simulator, make_renderer(c));
  else
    b.gateway = std::make_unique<HttpGateway>(c.http);
  if (c.embedding == "local")
    b.embedder = std::make_unique<LocalHashEmbedder>(c.embedding_dim, c.embedding_window);
  else
    b.embedder = std::make_unique<RemoteEmbedder>(c.remote_embedding);
  return b;
}

// ---------------------------------------------------------------------------
// run-attacks

struct RunSummary {
  std::size_t computed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::size_t rows = 0;
};

namespace detail {

inline std::string key_of(const std::string& sample_id, std::string_view what) {
  return sample_id + "\x1f" + std::string(what);
}

// Sorts by (sample_id, attack) so the table is independent of completion order.
inline void compact(const fs::path& path, const std::vector<json>& rows,
                    const std::function<std::string(const json&)>& key) {
  std::map<std::string, json> unique;
  for (const auto& r : rows) unique.insert_or_assign(key(r), r);
  std::vector<json> sorted;
  for (auto& [k, r] : unique) sorted.push_back(std::move(r));
  write_jsonl_atomic(path, sorted);
}

class Appender {
 public:
  explicit Appender(const fs::path& p) : out_(p, std::ios::app | std::ios::binary) {
    if (!out_) throw ValidationError("cannot append to " + p.string());
  }
  void write(const json& row) {
    std::lock_guard lk(m_);
    out_ << row.dump() << '\n';
    out_.flush();
  }

 private:
  std::mutex m_;
  std::ofstream out_;
};

}  // namespace detail

// `limit` caps how many new outcomes are computed (for staged or interrupted runs).
inline RunSummary cmd_run_attacks(const RunConfig& c, std::optional<std::size_t> limit = std::nullopt) {
  c.validate();
  Paths paths{c.output_dir};
  auto staged = load_staged(c);
  auto backend = make_backend(c, staged);
  AttackRunner runner(*backend.gateway, *backend.embedder, make_renderer(c), c.attack);

  std::vector<AttackKind> kinds;
  for (auto k : c.attacks)
    if (k != AttackKind::Meta) kinds.push_back(k);
  if (std::ranges::find(kinds, AttackKind::Logits) != kinds.end() && !backend.gateway->supports_logprobs())
    throw AttackDowngrade("the Logits attack needs token logprobs, which this backend does not expose; "
                          "use the Inquiry attack instead");

  auto existing = read_jsonl(paths.outcomes(), true);
  std::set<std::string> done;
  for (const auto& r : existing) done.insert(detail::key_of(r.at("sample_id"), r.at("attack").get<std::string>()));

  struct Job {
    const StagedTarget* target;
    AttackKind kind;
  };
  std::vector<Job> jobs;
  RunSummary summary;
  for (const auto& t : staged.targets)
    for (auto k : kinds) {
      if (done.contains(detail::key_of(t.sample.id(), to_string(k)))) {
        ++summary.skipped;
        continue;
      }
      jobs.push_back({&t, k});
    }
  if (limit && jobs.size() > *limit) jobs.resize(*limit);

  // Rewrite first so a torn tail from an interrupted run is dropped.
  auto row_key = [](const json& r) { return detail::key_of(r.at("sample_id"), r.at("attack").get<std::string>()); };
  detail::compact(paths.outcomes(), existing, row_key);
  std::atomic<std::size_t> failed{0}, computed{0};
  {
    detail::Appender outcomes(paths.outcomes());
    detail::Appender failures(paths.failures());
    parallel_for(jobs.size(), c.parallelism, [&](std::size_t i) {
      const auto& job = jobs[i];
      try {
        auto o = runner.run(job.kind, job.target->sample, staged.context_of(*job.target));
        o.validate();
        auto row = to_json(o);
        row["split"] = job.target->split;
        row["label"] = to_string(job.target->sample.label);
        outcomes.write(row);
        ++computed;
      } catch (const AttackDowngrade&) {
        throw;
      } catch (const Error& e) {
        ++failed;
        failures.write({{"sample_id", job.target->sample.id()}, {"attack", to_string(job.kind)}, {"error", e.what()}});
        spdlog::warn("{} / {}: {}", job.target->sample.id(), to_string(job.kind), e.what());
      }
    });
  }
  auto all = read_jsonl(paths.outcomes(), true);
  detail::compact(paths.outcomes(), all, row_key);
  summary.computed = computed;
  summary.failed = failed;
  summary.rows = read_jsonl(paths.outcomes()).size();
  if (auto* http = dynamic_cast<HttpGateway*>(backend.gateway.get())) {
    auto st = http->stats();
    spdlog::info("gateway: {} requests, {} retries, {} non-deterministic responses", st.requests, st.retries,
                 st.nondeterministic);
  }
  spdlog::info("run-attacks: {} computed, {} already present, {} failed; table has {} rows", summary.computed,
               summary.skipped, summary.failed, summary.rows);
  return summary;
}

// ---------------------------------------------------------------------------
// extract-features

inline RunSummary cmd_extract_features(const RunConfig& c, std::optional<std::size_t> limit = std::nullopt) {
  c.validate();
  Paths paths{c.output_dir};
  auto staged = load_staged(c);
  auto backend = make_backend(c, staged);
  AttackRunner runner(*backend.gateway, *backend.embedder, make_renderer(c), c.attack);

  auto existing = read_jsonl(paths.features(), true);
  std::set<std::string> done;
  for (const auto& r : existing) done.insert(r.at("sample_id").get<std::string>());
  std::vector<const StagedTarget*> jobs;
  RunSummary summary;
  for (const auto& t : staged.targets) {
    if (done.contains(t.sample.id())) ++summary.skipped;
    else jobs.push_back(&t);
  }
  if (limit && jobs.size() > *limit) jobs.resize(*limit);

  auto row_key = [](const json& r) { return r.at("sample_id").get<std::string>(); };
  detail::compact(paths.features(), existing, row_key);
  std::atomic<std::size_t> failed{0}, computed{0};
  {
    detail::Appender out(paths.features());
    detail::Appender failures(paths.failures());
    parallel_for(jobs.size(), c.parallelism, [&](std::size_t i) {
      const auto& t = *jobs[i];
      try {
        auto row = to_json(runner.extract_meta_features(t.sample, staged.context_of(t)));
        row["split"] = t.split;
        out.write(row);
        ++computed;
      } catch (const Error& e) {
        ++failed;
        failures.write({{"sample_id", t.sample.id()}, {"attack", "meta-features"}, {"error", e.what()}});
        spdlog::warn("{} / meta-features: {}", t.sample.id(), e.what());
      }
    });
  }
  detail::compact(paths.features(), read_jsonl(paths.features(), true), row_key);
  summary.computed = computed;
  summary.failed = failed;
  summary.rows = read_jsonl(paths.features()).size();
  spdlog::info("extract-features: {} computed, {} already present, {} failed", summary.computed,
               summary.skipped, summary.failed);
  return summary;
}

inline std::vector<std::pair<MembershipFeatureVector, std::string>> load_features(const fs::path& path) {
  std::vector<std::pair<MembershipFeatureVector, std::string>> out;
  for (const auto& row : read_jsonl(path)) out.emplace_back(feature_vector_from_json(row), row.at("split").get<std::string>());
  return out;
}

// ---------------------------------------------------------------------------
// train-meta

inline MetaModel cmd_train_meta(const RunConfig& c) {
  Paths paths{c.output_dir};
  if (!fs::exists(paths.features())) throw ValidationError("missing " + paths.features().string() + "; run extract-features first");
  std::vector<MembershipFeatureVector> reference;
  for (auto& [f, split] : load_features(paths.features()))
    if (split == "reference") reference.push_back(f);
  auto model = train(reference, c.meta);
  save_meta_model(paths.meta_model(), model);
  spdlog::info("train-meta: {} reference vectors, final loss {:.6f} after {} epochs", reference.size(),
               model.training.final_loss, model.training.epochs_run);
  return model;
}

// ---------------------------------------------------------------------------
// evaluate

inline std::string format_table(const std::vector<MetricsReport>& reports) {
  std::string out = fmt::format("{:<10} {:>9} {:>9} {:>9} {:>9}\n", "attack", "accuracy", "precision", "recall", "f1");
  for (const auto& r : reports)
    out += fmt::format("{:<10} {:>9.2f} {:>9.2f} {:>9.2f} {:>9.2f}\n", r.attack, r.accuracy, r.precision, r.recall, r.f1);
  return out;
}

inline std::vector<MetricsReport> cmd_evaluate(const RunConfig& c) {
  Paths paths{c.output_dir};
  if (!fs::exists(paths.outcomes())) throw ValidationError("missing " + paths.outcomes().string() + "; run run-attacks first");
  const json meta = run_metadata(c);

  struct Row {
    AttackOutcome outcome;
    Membership label;
    std::string split;
  };
  std::map<AttackKind, std::vector<Row>> by_attack;
  for (const auto& r : read_jsonl(paths.outcomes()))
    by_attack[attack_kind_from_string(r.at("attack").get<std::string>())].push_back(
        {outcome_from_json(r), membership_from_string(r.at("label").get<std::string>()), r.at("split").get<std::string>()});

  std::map<AttackKind, MetricsReport> reports;
  for (const auto& [kind, rows] : by_attack) {
    MetricsReport rep;
    std::vector<LabeledVerdict> verdicts;
    json extra = meta;
    if (kind == AttackKind::Inquiry) {
      std::size_t ambiguous = 0;
      for (const auto& r : rows) {
        if (r.split != "test") continue;
        verdicts.push_back({*r.outcome.verdict, r.label});
        ambiguous += r.outcome.metadata.value("ambiguous", false);
      }
      rep = compute_metrics(verdicts);
      extra["ambiguous_responses"] = ambiguous;
    } else {
      std::vector<LabeledScore> ref, test;
      for (const auto& r : rows) (r.split == "reference" ? ref : test).push_back({r.outcome.score->value, r.label});
      auto dir = direction_of(rows.front().outcome.score->kind);
      auto cal = calibrate_threshold(ref, dir, c.calibration);
      for (const auto& s : test) verdicts.push_back({classify(s.value, cal.threshold, dir), s.label});
      rep = compute_metrics(verdicts);
      rep.threshold = cal.threshold;
      extra["reference_objective"] = cal.objective_value;
      extra["direction"] = to_string(dir);
      if (c.report_auc) extra["auc"] = roc_auc(test, dir);
      if (kind == AttackKind::Loss || kind == AttackKind::Bert || kind == AttackKind::Bleu) {
        auto table = export_density(test, c.density_bins);
        write_text_atomic(paths.density() / (std::string(to_string(kind)) + ".csv"), table.to_csv());
        extra["density_overlap"] = table.overlap();
      }
    }
    rep.attack = std::string(to_string(kind));
    rep.preset = c.preset;
    rep.metadata = extra;
    reports.emplace(kind, rep);
  }

  if (fs::exists(paths.meta_model()) && fs::exists(paths.features())) {
    auto model = load_meta_model(paths.meta_model());
    std::vector<LabeledVerdict> verdicts;
    std::vector<LabeledScore> probs;
    for (const auto& [f, split] : load_features(paths.features())) {
      if (split != "test" || !f.label) continue;
      double p = predict(model, f);
      verdicts.push_back({p >= 0.5 ? Membership::Member : Membership::NonMember, *f.label});
      probs.push_back({p, *f.label});
    }
    auto rep = compute_metrics(verdicts);
    rep.attack = "meta";
    rep.preset = c.preset;
    rep.threshold = 0.5;
    rep.metadata = meta;
    rep.metadata["model"] = {{"final_loss", model.training.final_loss}, {"epochs", model.training.epochs_run},
                             {"lr", model.training.hyper.lr}, {"l2", model.training.hyper.l2}};
    if (c.report_auc) rep.metadata["auc"] = roc_auc(probs, Direction::HigherIsMember);
    reports.emplace(AttackKind::Meta, rep);
  } else {
    spdlog::info("evaluate: no trained meta-classifier found; the meta row is omitted");
  }

  std::vector<MetricsReport> ordered;
  std::string csv = "attack,accuracy,precision,recall,f1\n";
  for (auto k : kAllAttacks) {
    auto it = reports.find(k);
    if (it == reports.end()) continue;
    const auto& r = it->second;
    write_text_atomic(paths.reports() / (r.attack + ".json"), to_json(r).dump(2) + "\n");
    csv += fmt::format("{},{:.2f},{:.2f},{:.2f},{:.2f}\n", r.attack, r.accuracy, r.precision, r.recall, r.f1);
    ordered.push_back(r);
  }
  write_text_atomic(paths.reports() / "table.csv", csv);
  write_text_atomic(paths.reports() / "table.txt", format_table(ordered));
  return ordered;
}

// Runs every stage in order.
inline std::vector<MetricsReport> run_all(const RunConfig& c) {
  cmd_build_context(c);
  cmd_run_attacks(c);
  bool meta = std::ranges::find(c.attacks, AttackKind::Meta) != c.attacks.end();
  if (meta) {
    cmd_extract_features(c);
    cmd_train_meta(c);
  }
  return cmd_evaluate(c);
}

// Writes synthetic member and non-member corpora plus a config into `dir`,
// then runs every stage against the simulator.
inline fs::path write_demo(const fs::path& dir, std::uint64_t seed, std::size_t n_reference = 1000,
                           std::size_t n_test = 1000, std::string_view preset = "nq-30-mid") {
  fs::create_directories(dir);
  const auto& p = find_preset(preset);
  std::size_t per_class = (n_reference + n_test) / 2;
  std::size_t members = ((per_class + p.total_docs - 1) / p.total_docs) * p.total_docs;
  save_documents(dir / "members.jsonl", synthetic::generate_documents(members, lcmia::detail::mix(seed, 1), "mem"));
  save_documents(dir / "nonmembers.jsonl",
                 synthetic::generate_documents(per_class + 50, lcmia::detail::mix(seed, 2), "non"));
  json cfg{
      {"seed", seed},
      {"gateway", {{"backend", "simulator"}, {"parallelism", 4}}},
      {"corpus", {{"members", "members.jsonl"}, {"nonmembers", "nonmembers.jsonl"}}},
      {"context", {{"preset", std::string(preset)}}},
      {"sampling", {{"n_reference", n_reference}, {"n_test", n_test}}},
      {"attacks", {"logits", "loss", "meta", "inquiry", "bert", "bleu"}},
      {"split", {{"k", 4}, {"loss_mode", "echo"}}},
      {"evaluation", {{"calibration", "accuracy"}, {"density_bins", 50}}},
      {"output_dir", "out"},
  };
  write_text_atomic(dir / "config.json", cfg.dump(2) + "\n");
  return dir / "config.json";
}

}  // namespace lcmia::pipeline
