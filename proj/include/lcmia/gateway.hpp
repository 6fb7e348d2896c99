#pragma once

#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lcmia/corpus.hpp"
#include "lcmia/detail/hash.hpp"
#include "lcmia/error.hpp"

namespace lcmia {

using TokenLogprobs = std::map<std::string, double>;

struct Completion {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<double> token_logprobs;  // natural log
  // Per generated position; empty when alternatives were not requested.
  std::vector<TokenLogprobs> top_alternatives;
  int retries = 0;

  void validate() const {
    if (!token_logprobs.empty() && token_logprobs.size() != tokens.size())
      throw GatewayError("completion has " + std::to_string(tokens.size()) + " tokens but " +
                         std::to_string(token_logprobs.size()) + " logprobs");
    for (double lp : token_logprobs)
      if (!(lp <= 0.0)) throw GatewayError("completion logprob above zero or NaN");
  }
};

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 1;
  bool want_logprobs = false;
  int top_logprobs = 20;
  std::uint64_t seed = 0;
};

struct EchoScore {
  std::vector<std::string> continuation_tokens;
  std::vector<double> continuation_logprobs;
  // Range of the continuation inside the whole echoed sequence; span_begin is
  // also the prompt's token count.
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
  int retries = 0;

  std::size_t span_size() const noexcept { return span_end - span_begin; }
  bool empty() const noexcept { return continuation_logprobs.empty(); }
};

struct TokenEmbeddings {
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> vectors;

  std::size_t size() const noexcept { return vectors.size(); }
  bool empty() const noexcept { return vectors.empty(); }
  std::size_t dim() const noexcept { return vectors.empty() ? 0 : vectors.front().size(); }

  void validate() const {
    if (tokens.size() != vectors.size())
      throw GatewayError("embedding token/vector count mismatch");
    for (const auto& v : vectors)
      if (v.size() != dim() || v.empty()) throw GatewayError("embedding dimension mismatch");
  }
};

// A victim long-context model. Implementations must be safe to share across
// threads.
class ModelGateway {
 public:
  virtual ~ModelGateway() = default;

  // Greedy (temperature 0) completion.
  virtual Completion complete(const CompletionRequest& request) = 0;
  // Teacher-forced logprobs of `continuation` given `prompt`.
  virtual EchoScore score_echo(const std::string& prompt, const std::string& continuation) = 0;
  // The model's own tokenization of `text`, when the backend exposes it.
  virtual std::optional<std::vector<std::string>> tokenize(const std::string& text) {
    (void)text;
    return std::nullopt;
  }
  virtual bool supports_logprobs() const { return true; }
  virtual std::string mode() const = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual TokenEmbeddings embed_tokens(const std::string& text) = 0;
  virtual std::string mode() const = 0;
};

// Deterministic pseudo-contextual embeddings: each token vector is the hashed
// code of the token plus geometrically down-weighted codes of its neighbours
// (tagged with their relative offset), then unit-normalised.
inline TokenEmbeddings local_hash_embed(std::string_view text, std::size_t dim,
                                        std::size_t window, std::uint64_t seed = 0) {
  if (dim < 8) throw ValidationError("embedding dimension must be >= 8");
  TokenEmbeddings out;
  out.tokens = split_words(text);
  const auto n = out.tokens.size();
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = detail::fnv1a(out.tokens[i], seed ^ 0xcbf29ce484222325ull);

  auto accumulate = [&](std::vector<double>& v, std::uint64_t key, long offset, double weight) {
    std::uint64_t base = detail::mix(key, static_cast<std::uint64_t>(offset + 1024));
    for (std::size_t j = 0; j < dim; ++j)
      v[j] += weight * (2.0 * detail::unit_interval(detail::mix(base, j)) - 1.0);
  };

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim, 0.0);
    accumulate(v, keys[i], 0, 1.0);
    double w = 1.0;
    for (std::size_t o = 1; o <= window; ++o) {
      w *= 0.5;
      if (i >= o) accumulate(v, keys[i - o], -static_cast<long>(o), w);
      if (i + o < n) accumulate(v, keys[i + o], static_cast<long>(o), w);
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    out.vectors.push_back(std::move(v));
  }
  return out;
}

class LocalHashEmbedder final : public EmbeddingProvider {
 public:
  explicit LocalHashEmbedder(std::size_t dim = 64, std::size_t window = 2, std::uint64_t seed = 0)
      : dim_(dim), window_(window), seed_(seed) {
    if (dim_ < 8) throw ValidationError("embedding dimension must be >= 8");
  }

  TokenEmbeddings embed_tokens(const std::string& text) override {
    if (trim(text).empty()) throw ValidationError("nothing to embed");
    return local_hash_embed(text, dim_, window_, seed_);
  }

  std::string mode() const override {
    return "local-hash(d=" + std::to_string(dim_) + ",window=" + std::to_string(window_) + ")";
  }

 private:
  std::size_t dim_;
  std::size_t window_;
  std::uint64_t seed_;
};

// Counting semaphore with a runtime bound.
class RequestThrottle {
 public:
  explicit RequestThrottle(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}

  class Slot {
   public:
    explicit Slot(RequestThrottle& t) : t_(t) { t_.acquire(); }
    ~Slot() { t_.release(); }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    RequestThrottle& t_;
  };

  std::size_t limit() const noexcept { return limit_; }
  std::size_t peak() const {
    std::lock_guard lk(m_);
    return peak_;
  }

 private:
  void acquire() {
    std::unique_lock lk(m_);
    cv_.wait(lk, [&] { return in_flight_ < limit_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
  }
  void release() {
    {
      std::lock_guard lk(m_);
      --in_flight_;
    }
    cv_.notify_one();
  }

  std::size_t limit_;
  std::size_t in_flight_ = 0;
  std::size_t peak_ = 0;
  mutable std::mutex m_;
  std::condition_variable cv_;
};

}  // namespace lcmia
