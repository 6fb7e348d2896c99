#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lcmia/corpus.hpp"
#include "lcmia/detail/hash.hpp"
#include "lcmia/error.hpp"
#include "lcmia/gateway.hpp"
#include "lcmia/prompt.hpp"

namespace lcmia {

struct SimulatorParams {
  double member_token_logprob_mean = -0.05;
  double member_logprob_jitter = 0.03;
  double nonmember_token_logprob_mean = -3.5;
  double nonmember_logprob_jitter = 0.5;
  double retrieval_failure_rate = 0.05;
  double p_yes_given_member = 0.99;
  double p_yes_given_nonmember = 0.60;
  std::uint64_t seed = 0;

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0))
        throw ValidationError(std::string("simulator ") + name + " must lie in [0,1]");
    };
    prob(retrieval_failure_rate, "retrieval_failure_rate");
    prob(p_yes_given_member, "p_yes_given_member");
    prob(p_yes_given_nonmember, "p_yes_given_nonmember");
    if (member_token_logprob_mean > 0 || nonmember_token_logprob_mean > 0)
      throw ValidationError("simulator logprob means must be <= 0");
    if (member_logprob_jitter < 0 || nonmember_logprob_jitter < 0)
      throw ValidationError("simulator jitters must be >= 0");
  }
};

// Pseudo-words the simulator emits when it cannot (or does not) retrieve.
// None of them is an English word, so they never overlap natural corpora.
inline const std::vector<std::string>& simulator_vocabulary() {
  static const std::vector<std::string> vocab = [] {
    static constexpr std::string_view syllables[] = {"zo",  "qua", "vex", "ryl", "thim", "osk",
                                                     "ulp", "yth", "kra", "mib", "dro",  "fen",
                                                     "gax", "plu", "sny", "wub"};
    std::vector<std::string> v;
    for (std::size_t i = 0; i < 2048; ++i) {
      std::string w(syllables[i % 16]);
      w += syllables[(i / 16) % 16];
      w += syllables[(i / 256) % 16];
      v.push_back(std::move(w));
    }
    return v;
  }();
  return vocab;
}

// Deterministic stand-in for a long-context model. It recognises which
// registered context a prompt was built from, answers completion requests by
// copying the true continuation of a context document (unless a seeded
// retrieval-failure coin fires), and answers membership queries with seeded
// coins. Stateless across requests.
class SimulatorGateway final : public ModelGateway {
 public:
  SimulatorGateway(std::vector<ContextSpec> contexts, SimulatorParams params,
                   PromptRenderer renderer = {})
      : contexts_(std::move(contexts)), params_(params), renderer_(std::move(renderer)) {
    params_.validate();
    for (const auto& c : contexts_) system_texts_.push_back(renderer_.render_system_prompt(c));
  }

  const SimulatorParams& params() const noexcept { return params_; }

  Completion complete(const CompletionRequest& req) override {
    if (req.max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
    auto parsed = parse(req.prompt);
    if (!parsed) throw UnrecognizedPrompt("prompt does not extend any registered context");
    const std::uint64_t ph = detail::fnv1a(req.prompt, params_.seed);

    if (auto prefix = renderer_.extract_prefix(parsed->attack_section)) {
      auto source = retrieve(*parsed->context, *prefix, ph);
      Completion c = source ? copy_continuation(*source, req.max_tokens, ph)
                            : babble(static_cast<std::size_t>(req.max_tokens), ph);
      if (!req.want_logprobs) c.token_logprobs.clear();
      return c;
    }
    if (auto target = renderer_.extract_target(parsed->attack_section)) {
      Completion c = answer_membership(*parsed->context, *target, ph);
      if (!req.want_logprobs) {
        c.token_logprobs.clear();
        c.top_alternatives.clear();
      }
      return c;
    }
    throw UnrecognizedPrompt("prompt is neither a completion request nor a membership query");
  }

  EchoScore score_echo(const std::string& prompt, const std::string& continuation) override {
    EchoScore out;
    const std::uint64_t ph = detail::fnv1a(prompt, params_.seed);
    out.span_begin = word_spans(prompt).size();
    std::optional<std::string_view> source;
    if (auto parsed = parse(prompt))
      if (auto prefix = renderer_.extract_prefix(parsed->attack_section))
        source = retrieve(*parsed->context, *prefix, ph);

    auto truth = source ? split_words(*source) : std::vector<std::string>{};
    auto toks = whitespace_tokens(continuation);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      auto word = trim(toks[i]);
      bool recalled = i < truth.size() && truth[i] == word;
      out.continuation_tokens.push_back(toks[i]);
      out.continuation_logprobs.push_back(token_logprob(recalled, ph, i, word));
    }
    out.span_end = out.span_begin + out.continuation_tokens.size();
    return out;
  }

  std::optional<std::vector<std::string>> tokenize(const std::string& text) override {
    return whitespace_tokens(text);
  }

  std::string mode() const override { return "simulator"; }

  // Each token carries its leading whitespace; the last also carries any
  // trailing whitespace, so concatenation reproduces `text`.
  static std::vector<std::string> whitespace_tokens(std::string_view text) {
    std::vector<std::string> out;
    auto spans = word_spans(text);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < spans.size(); ++i) {
      std::size_t end = (i + 1 == spans.size()) ? text.size() : spans[i].end;
      out.emplace_back(text.substr(pos, end - pos));
      pos = end;
    }
    return out;
  }

 private:
  struct Parsed {
    const ContextSpec* context;
    std::string_view attack_section;
  };

  std::optional<Parsed> parse(std::string_view prompt) const {
    for (std::size_t i = 0; i < contexts_.size(); ++i) {
      const auto& sys = system_texts_[i];
      if (prompt.size() > sys.size() && prompt.starts_with(sys) && prompt[sys.size()] == '\n')
        return Parsed{&contexts_[i], prompt.substr(sys.size() + 1)};
    }
    return std::nullopt;
  }

  bool retrieval_fails(std::uint64_t ph) const {
    return detail::unit_interval(detail::mix(ph, 0x7265747269657665ull)) <
           params_.retrieval_failure_rate;
  }

  // Text following the first occurrence of `prefix` in a context document.
  std::optional<std::string_view> retrieve(const ContextSpec& ctx, std::string_view prefix,
                                           std::uint64_t ph) const {
    if (trim(prefix).empty()) return std::nullopt;
    for (const auto& d : ctx.documents) {
      auto at = d.text.find(prefix);
      if (at == std::string::npos) continue;
      if (retrieval_fails(ph)) return std::nullopt;
      return std::string_view(d.text).substr(at + prefix.size());
    }
    return std::nullopt;
  }

  double token_logprob(bool recalled, std::uint64_t ph, std::size_t pos,
                       std::string_view word) const {
    double mean = recalled ? params_.member_token_logprob_mean : params_.nonmember_token_logprob_mean;
    double jitter = recalled ? params_.member_logprob_jitter : params_.nonmember_logprob_jitter;
    if (jitter == 0.0) return mean;
    double z = detail::standard_normal(detail::mix(detail::fnv1a(word, ph), pos));
    return std::min(0.0, mean + jitter * z);
  }

  Completion copy_continuation(std::string_view source, int max_tokens, std::uint64_t ph) const {
    Completion c;
    auto spans = word_spans(source);
    std::size_t n = std::min<std::size_t>(spans.size(), static_cast<std::size_t>(max_tokens));
    if (n == 0) return c;
    c.text = std::string(source.substr(spans[0].begin, spans[n - 1].end - spans[0].begin));
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t from = i == 0 ? spans[0].begin : spans[i - 1].end;
      c.tokens.emplace_back(source.substr(from, spans[i].end - from));
      auto word = source.substr(spans[i].begin, spans[i].size());
      c.token_logprobs.push_back(token_logprob(true, ph, i, word));
    }
    return c;
  }

  Completion babble(std::size_t n, std::uint64_t ph) const {
    const auto& vocab = simulator_vocabulary();
    Completion c;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& w = vocab[detail::mix(ph, 0x10000 + i) % vocab.size()];
      c.tokens.push_back(i == 0 ? w : " " + w);
      c.text += c.tokens.back();
      c.token_logprobs.push_back(token_logprob(false, ph, i, w));
    }
    return c;
  }

  Completion answer_membership(const ContextSpec& ctx, std::string_view target,
                               std::uint64_t ph) const {
    bool member = std::ranges::any_of(ctx.documents, [&](const Document& d) {
      return d.text.find(target) != std::string::npos;
    });
    double p_yes = member ? params_.p_yes_given_member : params_.p_yes_given_nonmember;
    bool yes = detail::unit_interval(detail::mix(ph, 0x696e7175697279ull)) < p_yes;
    // Confidence of the chosen answer, independent of the true label.
    double q = 0.55 + 0.4 * detail::unit_interval(detail::mix(ph, 0x636f6e66ull));
    double yes_mass = 0.98 * (yes ? q : 1.0 - q);
    double no_mass = 0.98 - yes_mass;

    TokenLogprobs alt{{"yes", std::log(0.70 * yes_mass)}, {" Yes", std::log(0.25 * yes_mass)},
                      {"YES", std::log(0.05 * yes_mass)}, {"no", std::log(0.70 * no_mass)},
                      {" No", std::log(0.25 * no_mass)},  {"NO", std::log(0.05 * no_mass)},
                      {"I", std::log(0.02)}};
    Completion c;
    c.text = yes ? "yes" : "no";
    c.tokens = {c.text};
    c.token_logprobs = {alt.at(c.text)};
    c.top_alternatives = {std::move(alt)};
    return c;
  }

  std::vector<ContextSpec> contexts_;
  std::vector<std::string> system_texts_;
  SimulatorParams params_;
  PromptRenderer renderer_;
};

}  // namespace lcmia
