#pragma once

#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lcmia/corpus.hpp"
#include "lcmia/error.hpp"
#include "lcmia/gateway.hpp"
#include "lcmia/meta_classifier.hpp"
#include "lcmia/prompt.hpp"
#include "lcmia/scoring.hpp"

namespace lcmia {

enum class AttackKind { Logits, Loss, Inquiry, Bert, Bleu, Meta };

inline constexpr std::array<AttackKind, 6> kAllAttacks{AttackKind::Logits, AttackKind::Loss,
                                                       AttackKind::Meta,   AttackKind::Inquiry,
                                                       AttackKind::Bert,   AttackKind::Bleu};

inline std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::Logits: return "logits";
    case AttackKind::Loss: return "loss";
    case AttackKind::Inquiry: return "inquiry";
    case AttackKind::Bert: return "bert";
    case AttackKind::Bleu: return "bleu";
    case AttackKind::Meta: return "meta";
  }
  return "?";
}

inline AttackKind attack_kind_from_string(std::string_view s) {
  for (auto k : kAllAttacks)
    if (to_string(k) == s) return k;
  throw ValidationError("unknown attack '" + std::string(s) + "'");
}

enum class LossMode { Echo, Generated };

inline std::string_view to_string(LossMode m) { return m == LossMode::Echo ? "echo" : "generated"; }

struct AttackConfig {
  std::size_t split_k = 4;
  double token_inflation = 1.3;
  LossMode loss_mode = LossMode::Echo;
  double probability_floor = 1e-10;
  int top_logprobs = 20;
  std::size_t low_confidence_units = 8;
  std::uint64_t seed = 0;
};

struct AttackOutcome {
  std::string sample_id;
  AttackKind attack = AttackKind::Loss;
  std::optional<AttackScore> score;
  std::optional<Membership> verdict;
  nlohmann::json metadata = nlohmann::json::object();

  void validate() const {
    if (attack == AttackKind::Inquiry) {
      if (!verdict || score) throw ValidationError("inquiry outcomes carry a verdict and no score");
    } else if (!score) {
      throw ValidationError(std::string(to_string(attack)) + " outcome without a score");
    }
    if (attack == AttackKind::Meta && (score->value < 0 || score->value > 1))
      throw ValidationError("meta outcome score must be a probability");
  }
};

// Runs the attack strategies for one target sample against a gateway.
class AttackRunner {
 public:
  AttackRunner(ModelGateway& gateway, EmbeddingProvider& embedder, PromptRenderer renderer = {},
               AttackConfig config = {})
      : gateway_(gateway), embedder_(embedder), renderer_(std::move(renderer)), cfg_(config) {}

  const AttackConfig& config() const noexcept { return cfg_; }
  const PromptRenderer& renderer() const noexcept { return renderer_; }

  AttackOutcome run(AttackKind kind, const TargetSample& target, const ContextSpec& ctx) {
    switch (kind) {
      case AttackKind::Logits: return run_logits(target, ctx);
      case AttackKind::Inquiry: return run_inquiry(target, ctx);
      case AttackKind::Loss: return run_loss(target, ctx, cfg_.split_k);
      case AttackKind::Bert: return run_bert(target, ctx, cfg_.split_k);
      case AttackKind::Bleu: return run_bleu(target, ctx, cfg_.split_k);
      case AttackKind::Meta:
        throw ValidationError("meta outcomes come from a trained model, not from the gateway");
    }
    throw ValidationError("unknown attack");
  }

  std::string membership_prompt(const TargetSample& target, const ContextSpec& ctx) const {
    return renderer_.bundle(ctx, renderer_.render_membership_query(target.document.text)).full();
  }

  std::string completion_prompt(std::string_view prefix, const ContextSpec& ctx) const {
    return renderer_.bundle(ctx, renderer_.render_completion_prompt(prefix)).full();
  }

  AttackOutcome run_logits(const TargetSample& target, const ContextSpec& ctx) {
    auto out = start(target, AttackKind::Logits);
    static const char* kDowngrade =
        "the Logits attack needs first-token logprobs; this backend is text-only, run the "
        "Inquiry attack instead";
    if (!gateway_.supports_logprobs()) throw AttackDowngrade(kDowngrade);
    Completion c;
    try {
      c = gateway_.complete({membership_prompt(target, ctx), 1, true, cfg_.top_logprobs, cfg_.seed});
    } catch (const LogprobsUnsupported&) {
      throw AttackDowngrade(kDowngrade);
    }
    if (c.top_alternatives.empty() || c.top_alternatives.front().empty())
      throw AttackDowngrade(kDowngrade);
    out.score = yes_no_margin(c.top_alternatives.front(), cfg_.probability_floor);
    out.metadata["retries"] = c.retries;
    out.metadata["first_token"] = c.tokens.empty() ? "" : c.tokens.front();
    return out;
  }

  AttackOutcome run_inquiry(const TargetSample& target, const ContextSpec& ctx) {
    auto out = start(target, AttackKind::Inquiry);
    auto c = gateway_.complete({membership_prompt(target, ctx), 1, false, 0, cfg_.seed});
    if (trim(c.text).empty()) throw GatewayError("empty response to the membership query");
    auto [verdict, ambiguous] = parse_yes_no(c.text);
    out.verdict = verdict;
    out.metadata["ambiguous"] = ambiguous;
    out.metadata["response"] = c.text;
    out.metadata["retries"] = c.retries;
    return out;
  }

  // Member iff the first alphabetic word is "yes"; anything but "no" is also
  // flagged ambiguous.
  static std::pair<Membership, bool> parse_yes_no(std::string_view response) {
    std::size_t i = 0;
    while (i < response.size() && !std::isalpha(static_cast<unsigned char>(response[i]))) ++i;
    std::string word;
    while (i < response.size() && std::isalpha(static_cast<unsigned char>(response[i])))
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(response[i++])));
    if (word == "yes") return {Membership::Member, false};
    if (word == "no") return {Membership::NonMember, false};
    return {Membership::NonMember, true};
  }

  AttackOutcome run_loss(const TargetSample& target, const ContextSpec& ctx, std::size_t k) {
    auto out = start(target, AttackKind::Loss);
    auto split = split_document(target.document, k);
    auto [score, meta] = loss_score(split, ctx);
    out.score = score;
    out.metadata.update(meta);
    return out;
  }

  AttackOutcome run_bert(const TargetSample& target, const ContextSpec& ctx, std::size_t k) {
    auto out = start(target, AttackKind::Bert);
    auto split = split_document(target.document, k);
    auto gen = generate(split, ctx);
    out.score = bert_score(gen.text, split.suffix());
    out.metadata.update(split_metadata(split));
    out.metadata["generated_tokens"] = gen.tokens.size();
    out.metadata["empty_continuation"] = out.score->degenerate;
    out.metadata["retries"] = gen.retries;
    return out;
  }

  AttackOutcome run_bleu(const TargetSample& target, const ContextSpec& ctx, std::size_t k) {
    auto out = start(target, AttackKind::Bleu);
    auto split = split_document(target.document, k);
    auto gen = generate(split, ctx);
    out.score = sentence_bleu(gen.text, split.suffix());
    out.metadata.update(split_metadata(split));
    out.metadata["generated_tokens"] = gen.tokens.size();
    out.metadata["low_confidence"] = split.suffix_units() < cfg_.low_confidence_units;
    out.metadata["empty_continuation"] = out.score->degenerate;
    out.metadata["retries"] = gen.retries;
    return out;
  }

  MembershipFeatureVector extract_meta_features(const TargetSample& target, const ContextSpec& ctx) {
    auto words = word_spans(target.document.text).size();
    std::string failing;
    for (auto k : kMetaSplitCounts)
      if (words < k) failing += (failing.empty() ? "" : ", ") + std::to_string(k);
    if (!failing.empty())
      throw ValidationError("document '" + target.document.id + "' has " + std::to_string(words) +
                            " words, too short for k = " + failing);
    MembershipFeatureVector f;
    f.sample_id = target.id();
    f.label = target.label;
    std::size_t j = 0;
    for (auto k : kMetaSplitCounts) {
      auto split = split_document(target.document, k);
      auto gen = generate(split, ctx);
      f.values[j++] = loss_score(split, ctx).first.value;
      f.values[j++] = bert_score(gen.text, split.suffix()).value;
      f.values[j++] = sentence_bleu(gen.text, split.suffix()).value;
    }
    f.validate();
    return f;
  }

  int generation_budget(std::size_t suffix_units) const {
    return std::max(1, static_cast<int>(std::ceil(cfg_.token_inflation * suffix_units)));
  }

 private:
  AttackOutcome start(const TargetSample& target, AttackKind kind) const {
    AttackOutcome o;
    o.sample_id = target.id();
    o.attack = kind;
    return o;
  }

  nlohmann::json split_metadata(const SplitPieces& split) const {
    return {{"split_k", split.k()},
            {"split_unit", to_string(split.unit)},
            {"prefix_units", split.unit_counts.front()},
            {"suffix_units", split.suffix_units()},
            {"token_inflation", cfg_.token_inflation}};
  }

  Completion generate(const SplitPieces& split, const ContextSpec& ctx, bool logprobs = false) {
    return gateway_.complete({completion_prompt(split.prefix(), ctx),
                              generation_budget(split.suffix_units()), logprobs, 0, cfg_.seed});
  }

  AttackScore bert_score(const std::string& generated, std::string_view suffix) {
    if (trim(generated).empty() || trim(suffix).empty())
      return AttackScore::of(ScoreKind::Bert, 0.0, true);
    return bert_f1(embedder_.embed_tokens(generated), embedder_.embed_tokens(std::string(suffix)));
  }

  std::pair<AttackScore, nlohmann::json> loss_score(const SplitPieces& split, const ContextSpec& ctx) {
    if (split.k() < 2) throw ValidationError("loss attack needs k >= 2 to leave a suffix");
    auto meta = split_metadata(split);
    std::string prompt = completion_prompt(split.prefix(), ctx);
    if (cfg_.loss_mode == LossMode::Echo) {
      try {
        auto echo = gateway_.score_echo(prompt, " " + std::string(split.suffix()));
        if (echo.empty()) throw GatewayError("echo scoring returned an empty span");
        meta["loss_mode"] = "echo";
        meta["scored_tokens"] = echo.span_size();
        meta["prompt_tokens"] = echo.span_begin;
        meta["retries"] = echo.retries;
        return {suffix_nll(echo), meta};
      } catch (const EchoUnsupported&) {
        meta["echo_fallback"] = true;
      }
    }
    Completion c;
    try {
      c = generate(split, ctx, true);
    } catch (const LogprobsUnsupported&) {
      throw GatewayError("loss attack needs echo scoring or generated-token logprobs; neither is available");
    }
    if (c.token_logprobs.empty())
      throw GatewayError("loss attack: generation returned no token logprobs");
    std::size_t n = std::min(c.token_logprobs.size(), split.suffix_units());
    meta["loss_mode"] = "generated";
    meta["scored_tokens"] = n;
    meta["retries"] = c.retries;
    return {suffix_nll(std::span<const double>(c.token_logprobs.data(), n)), meta};
  }

  ModelGateway& gateway_;
  EmbeddingProvider& embedder_;
  PromptRenderer renderer_;
  AttackConfig cfg_;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// is rethrown after all workers stop.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < n;) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lk(error_mutex);
            if (!error) error = std::current_exception();
            next = n;
          }
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

inline nlohmann::json to_json(const AttackOutcome& o) {
  nlohmann::json j{{"sample_id", o.sample_id}, {"attack", to_string(o.attack)}, {"metadata", o.metadata}};
  if (o.score) {
    j["score"] = o.score->value;
    j["kind"] = to_string(o.score->kind);
    j["direction"] = to_string(o.score->direction);
    j["degenerate"] = o.score->degenerate;
  }
  if (o.verdict) j["verdict"] = to_string(*o.verdict);
  return j;
}

inline AttackOutcome outcome_from_json(const nlohmann::json& j) {
  AttackOutcome o;
  o.sample_id = j.at("sample_id").get<std::string>();
  o.attack = attack_kind_from_string(j.at("attack").get<std::string>());
  o.metadata = j.value("metadata", nlohmann::json::object());
  if (j.contains("score")) {
    o.score = AttackScore::of(score_kind_from_string(j.at("kind").get<std::string>()),
                              j["score"].get<double>(), j.value("degenerate", false));
  }
  if (j.contains("verdict")) o.verdict = membership_from_string(j["verdict"].get<std::string>());
  o.validate();
  return o;
}

}  // namespace lcmia
