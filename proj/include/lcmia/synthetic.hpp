#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lcmia/corpus.hpp"
#include "lcmia/detail/hash.hpp"

// Seeded English-like corpora for offline runs of the pipeline.
namespace lcmia::synthetic {

inline const std::vector<std::string_view>& words() {
  static const std::vector<std::string_view> w{
      "the", "of", "and", "a", "in", "to", "was", "is", "for", "on", "as", "with", "by", "he",
      "she", "it", "at", "from", "his", "her", "an", "were", "which", "are", "this", "also",
      "be", "has", "had", "first", "one", "their", "its", "after", "new", "who", "they", "two",
      "been", "other", "when", "there", "all", "during", "into", "school", "time", "may",
      "years", "more", "most", "only", "over", "city", "some", "world", "would", "where",
      "later", "up", "such", "used", "many", "can", "state", "about", "national", "out",
      "known", "university", "united", "then", "made", "film", "three", "while", "team",
      "season", "year", "album", "river", "prize", "physics", "award", "music", "church",
      "war", "government", "county", "league", "between", "under", "north", "south", "east",
      "west", "century", "company", "family", "history", "building", "series", "club",
      "game", "record", "population", "village", "election", "station", "public", "house",
      "water", "island", "party", "army", "group", "early", "played", "born", "died", "became",
      "released", "received", "won", "named", "built", "founded", "located", "published",
      "awarded", "discovered", "developed", "produced", "opened", "elected", "appointed",
      "north", "library", "museum", "theory", "energy", "science", "research", "medal",
      "diploma", "document", "laureate", "committee", "academy", "institute", "professor",
      "student", "engineer", "writer", "singer", "player", "coach", "captain", "king", "queen",
      "emperor", "bridge", "tower", "castle", "harbor", "valley", "mountain", "forest", "lake",
      "coast", "desert", "bay", "railway", "road", "airport", "market", "bank", "court", "law",
      "treaty", "battle", "navy", "fleet", "colony", "province", "district", "region",
      "kingdom", "republic", "empire", "border", "capital", "language", "culture", "festival",
      "theatre", "opera", "painting", "novel", "poem", "song", "band", "label", "chart",
      "single", "tour", "concert", "stadium", "championship", "cup", "final", "match", "goal",
      "player", "draft", "contract", "trade", "industry", "factory", "mine", "steel", "coal",
      "oil", "gas", "electric", "power", "engine", "machine", "computer", "software",
      "network", "signal", "radio", "television", "broadcast", "newspaper", "magazine",
      "journal", "article", "study", "experiment", "laboratory", "particle", "atom", "ray",
      "light", "wave", "field", "force", "mass", "heat", "star", "planet", "moon", "orbit",
      "species", "plant", "animal", "bird", "fish", "insect", "disease", "hospital",
      "medicine", "doctor", "patient", "treatment", "vaccine", "virus", "cell", "gene",
      "protein", "blood", "brain", "heart", "ancient", "modern", "famous", "major", "small",
      "large", "long", "short", "high", "low", "old", "young", "royal", "federal", "local",
      "global", "annual", "several", "various", "final", "original", "official", "popular"};
  return w;
}

inline std::string capitalized(std::string_view w) {
  std::string s(w);
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

// Documents of min_words..max_words words in sentences of 6..14 words, with
// occasional commas and four-digit years.
inline std::vector<Document> generate_documents(std::size_t n, std::uint64_t seed,
                                                std::string_view id_prefix,
                                                std::size_t min_words = 40,
                                                std::size_t max_words = 100) {
  const auto& vocab = words();
  std::vector<Document> out;
  for (std::size_t d = 0; d < n; ++d) {
    std::uint64_t h = detail::mix(seed, d);
    std::size_t len = min_words + detail::mix(h, 1) % (max_words - min_words + 1);
    std::string text;
    std::size_t in_sentence = 0, sentence_len = 6 + detail::mix(h, 2) % 9;
    for (std::size_t i = 0; i < len; ++i) {
      std::uint64_t wh = detail::mix(h, 100 + i);
      std::string word;
      if (wh % 23 == 0)
        word = std::to_string(1800 + detail::mix(wh, 7) % 224);
      else
        word = std::string(vocab[detail::mix(wh, 3) % vocab.size()]);
      if (in_sentence == 0) word = capitalized(word);
      if (!text.empty()) text += ' ';
      text += word;
      ++in_sentence;
      if (in_sentence == sentence_len || i + 1 == len) {
        text += '.';
        in_sentence = 0;
        sentence_len = 6 + detail::mix(wh, 4) % 9;
      } else if (detail::mix(wh, 5) % 11 == 0) {
        text += ',';
      }
    }
    std::string title = capitalized(vocab[detail::mix(h, 8) % vocab.size()]) + " " +
                        capitalized(vocab[detail::mix(h, 9) % vocab.size()]);
    char id[64];
    std::snprintf(id, sizeof id, "%.*s-%05zu", static_cast<int>(id_prefix.size()), id_prefix.data(), d);
    out.push_back({id, title, std::move(text)});
  }
  return out;
}

}  // namespace lcmia::synthetic
