#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "lcmia/detail/hash.hpp"
#include "lcmia/error.hpp"

namespace lcmia {

struct Document {
  std::string id;
  std::string title;
  std::string text;

  bool operator==(const Document&) const = default;
};

inline bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Ordered collection with unique ids.
class DocumentSet {
 public:
  DocumentSet() = default;
  explicit DocumentSet(std::vector<Document> docs) {
    for (auto& d : docs) add(std::move(d));
  }

  void add(Document doc) {
    if (trim(doc.text).empty())
      throw ValidationError("document '" + doc.id + "' has empty text");
    if (!index_.emplace(doc.id, docs_.size()).second)
      throw ValidationError("duplicate document id '" + doc.id + "'");
    docs_.push_back(std::move(doc));
  }

  bool contains(std::string_view id) const { return index_.contains(std::string(id)); }
  const Document& at(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) throw ValidationError("unknown document id '" + std::string(id) + "'");
    return docs_[it->second];
  }

  std::size_t size() const noexcept { return docs_.size(); }
  bool empty() const noexcept { return docs_.empty(); }
  const Document& operator[](std::size_t i) const { return docs_[i]; }
  auto begin() const { return docs_.begin(); }
  auto end() const { return docs_.end(); }
  const std::vector<Document>& documents() const noexcept { return docs_; }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ContextSpec {
  std::string id;
  std::vector<Document> documents;
  std::string question;
  std::size_t gold_index = 1;  // 1-based

  const Document& gold() const { return documents.at(gold_index - 1); }

  bool contains(std::string_view doc_id) const {
    return std::ranges::any_of(documents, [&](const Document& d) { return d.id == doc_id; });
  }

  void validate() const {
    if (documents.empty()) throw ValidationError("context '" + id + "' has no documents");
    if (gold_index < 1 || gold_index > documents.size())
      throw ValidationError("context '" + id + "': gold_index " + std::to_string(gold_index) +
                            " out of range [1, " + std::to_string(documents.size()) + "]");
    if (trim(question).empty()) throw ValidationError("context '" + id + "' has an empty question");
    std::unordered_set<std::string> seen;
    for (const auto& d : documents)
      if (!seen.insert(d.id).second)
        throw ValidationError("context '" + id + "' repeats document '" + d.id + "'");
  }
};

enum class Membership { Member, NonMember };

inline std::string_view to_string(Membership m) {
  return m == Membership::Member ? "member" : "nonmember";
}

inline Membership membership_from_string(std::string_view s) {
  if (s == "member") return Membership::Member;
  if (s == "nonmember") return Membership::NonMember;
  throw ParseError("unknown membership label '" + std::string(s) + "'", 0);
}

struct TargetSample {
  Document document;
  Membership label = Membership::NonMember;
  std::optional<std::string> source_context_id;

  // Stable key: members and non-members may come from pools with clashing ids.
  std::string id() const {
    return (label == Membership::Member ? "m:" : "n:") + document.id;
  }
};

enum class SplitUnit { Word, ReportedToken };

inline std::string_view to_string(SplitUnit u) {
  return u == SplitUnit::Word ? "word" : "reported-token";
}

// Half-open byte range into a text.
struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
};

// A document cut into k contiguous pieces. Pieces carry no leading or
// trailing whitespace; the whitespace between them lives in `separators`
// (k + 1 entries, including the text's own leading and trailing runs).
struct SplitPieces {
  std::string source;
  std::vector<TextSpan> spans;
  std::vector<std::size_t> unit_counts;
  SplitUnit unit = SplitUnit::Word;

  std::size_t k() const noexcept { return spans.size(); }

  std::string_view piece(std::size_t i) const {
    return std::string_view(source).substr(spans[i].begin, spans[i].size());
  }
  std::vector<std::string> pieces() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k(); ++i) out.emplace_back(piece(i));
    return out;
  }
  std::vector<std::string> separators() const {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (const auto& s : spans) {
      out.push_back(source.substr(pos, s.begin - pos));
      pos = s.end;
    }
    out.push_back(source.substr(pos));
    return out;
  }
  std::string reconstruct() const {
    auto seps = separators();
    std::string out = seps[0];
    for (std::size_t i = 0; i < k(); ++i) {
      out += piece(i);
      out += seps[i + 1];
    }
    return out;
  }

  std::string_view prefix() const { return piece(0); }
  // Pieces 2..k with their original separators.
  std::string_view suffix() const {
    if (k() < 2) return {};
    return std::string_view(source).substr(spans[1].begin, spans.back().end - spans[1].begin);
  }
  std::size_t suffix_units() const {
    std::size_t n = 0;
    for (std::size_t i = 1; i < unit_counts.size(); ++i) n += unit_counts[i];
    return n;
  }
};

inline std::vector<TextSpan> word_spans(std::string_view text) {
  std::vector<TextSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) break;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    out.push_back({start, i});
  }
  return out;
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  for (auto s : word_spans(text)) out.emplace_back(text.substr(s.begin, s.size()));
  return out;
}

// Groups `units` (ordered, non-overlapping spans of `text`) into k balanced
// pieces; the first (n mod k) pieces get one extra unit.
inline SplitPieces split_units(std::string text, std::span<const TextSpan> units,
                               std::size_t k, SplitUnit unit) {
  if (k < 1) throw ValidationError("split count must be >= 1");
  if (units.size() < k)
    throw ValidationError("document has " + std::to_string(units.size()) + " " +
                          std::string(to_string(unit)) + " units, fewer than k=" +
                          std::to_string(k));
  SplitPieces out;
  out.unit = unit;
  std::size_t base = units.size() / k, extra = units.size() % k, next = 0;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t n = base + (i < extra ? 1 : 0);
    out.spans.push_back({units[next].begin, units[next + n - 1].end});
    out.unit_counts.push_back(n);
    next += n;
  }
  out.source = std::move(text);
  return out;
}

inline SplitPieces split_document(const Document& doc, std::size_t k) {
  auto units = word_spans(doc.text);
  return split_units(doc.text, units, k, SplitUnit::Word);
}

// Token-unit split from model-reported token strings, whose concatenation
// must reproduce the document text. Whitespace-only tokens are not counted
// and leading whitespace inside a token is not part of its unit span.
inline SplitPieces split_document(const Document& doc, std::size_t k,
                                  std::span<const std::string> reported_tokens) {
  std::vector<TextSpan> units;
  std::size_t pos = 0;
  for (const auto& tok : reported_tokens) {
    if (doc.text.compare(pos, tok.size(), tok) != 0)
      throw ValidationError("reported tokens do not reproduce the text of '" + doc.id + "'");
    std::size_t b = pos, e = pos + tok.size();
    while (b < e && is_space(doc.text[b])) ++b;
    while (e > b && is_space(doc.text[e - 1])) --e;
    if (b < e) units.push_back({b, e});
    pos += tok.size();
  }
  if (pos != doc.text.size())
    throw ValidationError("reported tokens do not cover the text of '" + doc.id + "'");
  return split_units(doc.text, units, k, SplitUnit::ReportedToken);
}

inline DocumentSet load_documents(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file " + path.string());
  DocumentSet set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string() + ": malformed record: " + e.what(), lineno);
    }
    Document doc;
    try {
      doc.id = rec.at("id").get<std::string>();
      doc.title = rec.at("title").get<std::string>();
      doc.text = rec.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": record needs string fields id/title/text: " + e.what(),
                       lineno);
    }
    try {
      set.add(std::move(doc));
    } catch (const ValidationError& e) {
      throw ParseError(path.string() + ": " + e.what(), lineno);
    }
  }
  if (set.empty()) spdlog::warn("corpus file {} contains no documents", path.string());
  return set;
}

inline void save_documents(const std::filesystem::path& path, std::span<const Document> docs) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& d : docs)
    out << nlohmann::json{{"id", d.id}, {"title", d.title}, {"text", d.text}}.dump() << '\n';
}

// Fisher-Yates over a stable generator so seeded draws agree across
// standard libraries.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = detail::mix(seed, i) % i;
    std::swap(v[i - 1], v[j]);
  }
}

inline ContextSpec assemble_context(const DocumentSet& docs, const Document& gold,
                                    std::string question, std::size_t total,
                                    std::size_t gold_index, std::uint64_t seed,
                                    std::string context_id = "ctx-0") {
  if (total < 1) throw ValidationError("context needs at least one document");
  if (gold_index < 1 || gold_index > total)
    throw ValidationError("gold_index " + std::to_string(gold_index) + " out of range [1, " +
                          std::to_string(total) + "]");
  std::vector<const Document*> distractors;
  for (const auto& d : docs)
    if (d.id != gold.id) distractors.push_back(&d);
  if (distractors.size() < total - 1)
    throw ValidationError("need " + std::to_string(total - 1) + " distractors, have " +
                          std::to_string(distractors.size()));
  seeded_shuffle(distractors, seed);

  ContextSpec ctx;
  ctx.id = std::move(context_id);
  ctx.question = std::move(question);
  ctx.gold_index = gold_index;
  for (std::size_t i = 0; i + 1 < total; ++i) ctx.documents.push_back(*distractors[i]);
  ctx.documents.insert(ctx.documents.begin() + static_cast<std::ptrdiff_t>(gold_index - 1), gold);
  ctx.validate();
  return ctx;
}

using QuestionSource = std::function<std::string(const Document& gold)>;

inline QuestionSource title_question_source() {
  return [](const Document& gold) { return "what is known about " + gold.title + "?"; };
}

// Builds n contexts over disjoint documents of `pool`. gold_index = nullopt
// draws a uniform position per context.
inline std::vector<ContextSpec> build_contexts(const DocumentSet& pool, std::size_t n_contexts,
                                               std::size_t total,
                                               std::optional<std::size_t> gold_index,
                                               const QuestionSource& question,
                                               std::uint64_t seed) {
  if (n_contexts * total > pool.size())
    throw ValidationError("pool of " + std::to_string(pool.size()) + " documents cannot fill " +
                          std::to_string(n_contexts) + " contexts of " + std::to_string(total));
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, seed);

  std::vector<ContextSpec> out;
  for (std::size_t c = 0; c < n_contexts; ++c) {
    DocumentSet chunk;
    for (std::size_t j = 0; j < total; ++j) chunk.add(pool[order[c * total + j]]);
    const Document& gold = chunk[0];
    std::size_t pos = gold_index ? *gold_index : 1 + detail::mix(seed, 1000 + c) % total;
    char id[32];
    std::snprintf(id, sizeof id, "ctx-%04zu", c);
    out.push_back(assemble_context(chunk, gold, question(gold), total, pos,
                                   detail::mix(seed, c), id));
  }
  return out;
}

struct TargetSets {
  std::vector<TargetSample> reference;
  std::vector<TargetSample> test;
};

// Balanced, disjoint reference/test draws. Pools must already carry labels.
inline TargetSets sample_targets(std::vector<TargetSample> members,
                                 std::vector<TargetSample> nonmembers, std::size_t n_ref,
                                 std::size_t n_test, std::uint64_t seed) {
  if (n_ref % 2 || n_test % 2)
    throw ValidationError("reference and test sizes must be even for class balance");
  std::size_t need = (n_ref + n_test) / 2;
  if (members.size() < need || nonmembers.size() < need)
    throw ValidationError("insufficient pool size: need " + std::to_string(need) +
                          " per class, have " + std::to_string(members.size()) + " members and " +
                          std::to_string(nonmembers.size()) + " non-members");
  seeded_shuffle(members, detail::mix(seed, 1));
  seeded_shuffle(nonmembers, detail::mix(seed, 2));

  TargetSets sets;
  auto take = [](std::vector<TargetSample>& pool, std::size_t from, std::size_t n,
                 std::vector<TargetSample>& into) {
    for (std::size_t i = from; i < from + n; ++i) into.push_back(pool[i]);
  };
  take(members, 0, n_ref / 2, sets.reference);
  take(nonmembers, 0, n_ref / 2, sets.reference);
  take(members, n_ref / 2, n_test / 2, sets.test);
  take(nonmembers, n_ref / 2, n_test / 2, sets.test);
  auto by_id = [](const TargetSample& a, const TargetSample& b) { return a.id() < b.id(); };
  std::ranges::sort(sets.reference, by_id);
  std::ranges::sort(sets.test, by_id);
  return sets;
}

}  // namespace lcmia
