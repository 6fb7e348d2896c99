#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lcmia/error.hpp"
#include "lcmia/gateway.hpp"

namespace lcmia {

enum class Direction { HigherIsMember, LowerIsMember };
enum class ScoreKind { Logits, Loss, Bert, Bleu, Meta };

inline std::string_view to_string(Direction d) {
  return d == Direction::HigherIsMember ? "higher-is-member" : "lower-is-member";
}
inline std::string_view to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::Logits: return "logits";
    case ScoreKind::Loss: return "loss";
    case ScoreKind::Bert: return "bert";
    case ScoreKind::Bleu: return "bleu";
    case ScoreKind::Meta: return "meta";
  }
  return "?";
}
inline ScoreKind score_kind_from_string(std::string_view s) {
  for (auto k : {ScoreKind::Logits, ScoreKind::Loss, ScoreKind::Bert, ScoreKind::Bleu, ScoreKind::Meta})
    if (to_string(k) == s) return k;
  throw ValidationError("unknown score kind '" + std::string(s) + "'");
}

constexpr Direction direction_of(ScoreKind k) {
  return k == ScoreKind::Loss ? Direction::LowerIsMember : Direction::HigherIsMember;
}

struct AttackScore {
  double value = 0.0;
  ScoreKind kind = ScoreKind::Loss;
  Direction direction = Direction::LowerIsMember;
  // Set when the kernel hit an empty input and returned its fallback value.
  bool degenerate = false;

  static AttackScore of(ScoreKind k, double v, bool degenerate = false) {
    return {v, k, direction_of(k), degenerate};
  }
};

// ---------------------------------------------------------------------------
// Logits: log-ratio of yes-mass to no-mass at the first generated position.

inline AttackScore yes_no_margin(const TokenLogprobs& alternatives, double floor = 1e-10) {
  if (alternatives.empty()) throw ValidationError("yes/no margin needs a non-empty alternatives map");
  if (!(floor > 0)) throw ValidationError("probability floor must be > 0");
  static constexpr std::array<std::string_view, 3> yes{"yes", "Yes", "YES"};
  static constexpr std::array<std::string_view, 3> no{"no", "No", "NO"};
  double yes_mass = 0, no_mass = 0;
  for (const auto& [tok, lp] : alternatives) {
    std::string_view t = tok;
    while (!t.empty() && is_space(t.front())) t.remove_prefix(1);
    if (std::ranges::find(yes, t) != yes.end()) yes_mass += std::exp(lp);
    else if (std::ranges::find(no, t) != no.end()) no_mass += std::exp(lp);
  }
  if (yes_mass == 0) yes_mass = floor;
  if (no_mass == 0) no_mass = floor;
  return AttackScore::of(ScoreKind::Logits, std::log(yes_mass) - std::log(no_mass));
}

// ---------------------------------------------------------------------------
// Loss: mean negative log-likelihood over the continuation span.

inline AttackScore suffix_nll(std::span<const double> logprobs) {
  if (logprobs.empty()) throw ValidationError("suffix NLL over an empty span");
  double sum = 0;
  for (double lp : logprobs) sum += lp;
  return AttackScore::of(ScoreKind::Loss, -sum / static_cast<double>(logprobs.size()));
}

inline AttackScore suffix_nll(const EchoScore& echo) { return suffix_nll(echo.continuation_logprobs); }

// ---------------------------------------------------------------------------
// Sentence BLEU, matching sacrebleu.sentence_bleu defaults: 13a tokenizer,
// exponential smoothing, effective order, single reference.

namespace detail {

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

// [\{-\~\[-\` -\&\(-\+\:-\@\/]
inline bool is_13a_symbol(char c) {
  auto u = static_cast<unsigned char>(c);
  return (u >= '{' && u <= '~') || (u >= '[' && u <= '`') || (u >= ' ' && u <= '&') ||
         (u >= '(' && u <= '+') || (u >= ':' && u <= '@') || u == '/';
}

// Emulates one Python re.sub pass of a two-character pattern: scan left to
// right, on a match emit the replacement and resume after the match.
template <typename Pred1, typename Pred2, typename Emit>
std::string sub_pairs(const std::string& in, Pred1 first, Pred2 second, Emit emit) {
  std::string out;
  out.reserve(in.size() + in.size() / 4);
  std::size_t i = 0;
  while (i < in.size()) {
    if (i + 1 < in.size() && first(in[i]) && second(in[i + 1])) {
      emit(out, in[i], in[i + 1]);
      i += 2;
    } else {
      out += in[i++];
    }
  }
  return out;
}

}  // namespace detail

inline std::vector<std::string> tokenize_13a(std::string_view raw) {
  std::string line(raw);
  while (!line.empty() && is_space(line.back())) line.pop_back();  // rstrip before tokenizing
  detail::replace_all(line, "<skipped>", "");
  detail::replace_all(line, "-\n", "");
  detail::replace_all(line, "\n", " ");
  if (line.find('&') != std::string::npos) {
    detail::replace_all(line, "&quot;", "\"");
    detail::replace_all(line, "&amp;", "&");
    detail::replace_all(line, "&lt;", "<");
    detail::replace_all(line, "&gt;", ">");
  }
  line = " " + line + " ";

  std::string s;
  for (char c : line) {
    if (detail::is_13a_symbol(c)) {
      s += ' ';
      s += c;
      s += ' ';
    } else {
      s += c;
    }
  }
  auto is_pc = [](char c) { return c == '.' || c == ','; };
  auto not_digit = [](char c) { return !detail::is_digit(c); };
  s = detail::sub_pairs(s, not_digit, is_pc, [](std::string& o, char a, char b) {
    o += a;
    o += ' ';
    o += b;
    o += ' ';
  });
  s = detail::sub_pairs(s, is_pc, not_digit, [](std::string& o, char a, char b) {
    o += ' ';
    o += a;
    o += ' ';
    o += b;
  });
  s = detail::sub_pairs(s, detail::is_digit, [](char c) { return c == '-'; },
                        [](std::string& o, char a, char b) {
                          o += a;
                          o += ' ';
                          o += b;
                          o += ' ';
                        });
  return split_words(s);
}

struct BleuStats {
  std::array<long, 4> correct{};
  std::array<long, 4> total{};
  long sys_len = 0;
  long ref_len = 0;
};

inline BleuStats bleu_stats(const std::vector<std::string>& hyp,
                            const std::vector<std::string>& ref) {
  using Ngram = std::vector<std::string>;
  auto counts = [](const std::vector<std::string>& toks, std::size_t n) {
    std::map<Ngram, long> c;
    for (std::size_t i = 0; i + n <= toks.size(); ++i)
      ++c[Ngram(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n))];
    return c;
  };
  BleuStats st;
  st.sys_len = static_cast<long>(hyp.size());
  st.ref_len = static_cast<long>(ref.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    auto h = counts(hyp, n), r = counts(ref, n);
    for (const auto& [g, c] : h) {
      st.total[n - 1] += c;
      if (auto it = r.find(g); it != r.end()) st.correct[n - 1] += std::min(c, it->second);
    }
  }
  return st;
}

inline double bleu_from_stats(const BleuStats& st) {
  double bp = 1.0;
  if (st.sys_len < st.ref_len)
    bp = st.sys_len > 0 ? std::exp(1.0 - static_cast<double>(st.ref_len) / st.sys_len) : 0.0;
  if (std::ranges::all_of(st.correct, [](long c) { return c == 0; })) return 0.0;

  std::array<double, 4> precisions{};
  double smooth = 1.0;
  int eff_order = 4;
  for (int n = 1; n <= 4; ++n) {
    if (st.total[n - 1] == 0) break;
    eff_order = n;
    if (st.correct[n - 1] == 0) {
      smooth *= 2;
      precisions[n - 1] = 100.0 / (smooth * st.total[n - 1]);
    } else {
      precisions[n - 1] = 100.0 * st.correct[n - 1] / st.total[n - 1];
    }
  }
  double log_sum = 0;
  for (int n = 0; n < eff_order; ++n)
    log_sum += precisions[n] == 0.0 ? -9999999999.0 : std::log(precisions[n]);
  return bp * std::exp(log_sum / eff_order);
}

// Empty candidate or reference yields 0 flagged as degenerate.
inline AttackScore sentence_bleu(std::string_view candidate, std::string_view reference) {
  auto hyp = tokenize_13a(candidate), ref = tokenize_13a(reference);
  if (hyp.empty() || ref.empty()) return AttackScore::of(ScoreKind::Bleu, 0.0, true);
  return AttackScore::of(ScoreKind::Bleu, bleu_from_stats(bleu_stats(hyp, ref)));
}

// ---------------------------------------------------------------------------
// BERTScore F1 with greedy max matching over cosine similarities, no IDF.

struct BertPRF {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

inline BertPRF bert_prf(const TokenEmbeddings& cand, const TokenEmbeddings& ref) {
  if (cand.empty() || ref.empty()) throw ValidationError("BERTScore needs non-empty embeddings");
  if (cand.dim() != ref.dim())
    throw ValidationError("BERTScore dimension mismatch: " + std::to_string(cand.dim()) + " vs " +
                          std::to_string(ref.dim()));
  auto normalized = [](const std::vector<std::vector<double>>& vs) {
    std::vector<std::vector<double>> out = vs;
    for (auto& v : out) {
      double n = 0;
      for (double x : v) n += x * x;
      n = std::sqrt(n);
      if (n > 0)
        for (double& x : v) x /= n;
    }
    return out;
  };
  auto c = normalized(cand.vectors), r = normalized(ref.vectors);
  std::vector<double> best_c(c.size(), -1.0), best_r(r.size(), -1.0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      double s = 0;
      for (std::size_t d = 0; d < c[i].size(); ++d) s += c[i][d] * r[j][d];
      best_c[i] = std::max(best_c[i], s);
      best_r[j] = std::max(best_r[j], s);
    }
  }
  BertPRF out;
  for (double s : best_c) out.precision += s;
  for (double s : best_r) out.recall += s;
  out.precision /= static_cast<double>(c.size());
  out.recall /= static_cast<double>(r.size());
  double denom = out.precision + out.recall;
  // Mixed-sign P and R can push the harmonic mean outside [-1, 1].
  out.f1 = denom <= 0 ? 0.0 : std::clamp(2 * out.precision * out.recall / denom, -1.0, 1.0);
  return out;
}

inline AttackScore bert_f1(const TokenEmbeddings& cand, const TokenEmbeddings& ref) {
  return AttackScore::of(ScoreKind::Bert, bert_prf(cand, ref).f1);
}

}  // namespace lcmia
