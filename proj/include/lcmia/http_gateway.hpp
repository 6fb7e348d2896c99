#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "lcmia/error.hpp"
#include "lcmia/gateway.hpp"

namespace lcmia {

struct HttpGatewayConfig {
  std::string endpoint = "http://127.0.0.1:8000";  // scheme://host[:port]
  std::string completions_path = "/v1/completions";
  std::string model;
  std::string api_key;  // from the environment, never from config files
  std::size_t parallelism = 4;
  int max_retries = 4;
  std::chrono::milliseconds backoff_initial{250};
  std::chrono::milliseconds backoff_cap{8000};
  std::chrono::seconds timeout{120};
  // Some servers reject max_tokens=0 together with echo.
  int echo_max_tokens = 1;
  // Re-issue every completion and count disagreeing responses.
  bool check_determinism = false;
};

struct GatewayStats {
  std::size_t requests = 0;
  std::size_t retries = 0;
  std::size_t nondeterministic = 0;
};

namespace detail {

inline long first_match(const std::string& s, const std::regex& re) {
  std::smatch m;
  if (std::regex_search(s, m, re)) return std::stol(m[1].str());
  return -1;
}

inline std::string error_message(const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_object() && j.contains("error")) {
    const auto& e = j["error"];
    if (e.is_string()) return e.get<std::string>();
    if (e.is_object() && e.contains("message") && e["message"].is_string())
      return e["message"].get<std::string>();
  }
  return body;
}

inline std::string lower(std::string s) {
  std::ranges::transform(s, s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace detail

// Client for a completions-style endpoint (prompt, max_tokens, temperature,
// logprobs, echo). Thread-safe; at most `parallelism` requests in flight.
class HttpGateway final : public ModelGateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpGateway(HttpGatewayConfig cfg)
      : cfg_(std::move(cfg)), throttle_(cfg_.parallelism), sleep_([](auto d) {
          std::this_thread::sleep_for(d);
        }) {}

  void set_sleeper(Sleeper s) { sleep_ = std::move(s); }
  const HttpGatewayConfig& config() const noexcept { return cfg_; }
  const RequestThrottle& throttle() const noexcept { return throttle_; }

  GatewayStats stats() const {
    return {requests_.load(), retries_.load(), nondeterministic_.load()};
  }

  Completion complete(const CompletionRequest& req) override {
    if (req.max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
    nlohmann::json body = base_body(req.prompt, req.max_tokens);
    body["seed"] = req.seed;
    if (req.want_logprobs) body["logprobs"] = req.top_logprobs;
    auto [resp, retries] = post(body);
    Completion c = parse_completion(resp, req.want_logprobs);
    c.retries = retries;
    if (cfg_.check_determinism) {
      auto [again, r2] = post(body);
      Completion d = parse_completion(again, req.want_logprobs);
      if (d.text != c.text || d.token_logprobs != c.token_logprobs) ++nondeterministic_;
      c.retries += r2;
    }
    c.validate();
    return c;
  }

  EchoScore score_echo(const std::string& prompt, const std::string& continuation) override {
    EchoScore out;
    if (continuation.empty()) return out;
    const std::string full = prompt + continuation;
    nlohmann::json body = base_body(full, cfg_.echo_max_tokens);
    body["echo"] = true;
    body["logprobs"] = 0;
    auto [resp, retries] = post(body);
    out.retries = retries;

    const auto& lp = logprobs_of(resp);
    if (!lp.contains("text_offset") || !lp["text_offset"].is_array())
      throw EchoUnsupported("echo response carries no text offsets");
    const auto& tokens = lp["tokens"];
    const auto& logprobs = lp["token_logprobs"];
    const auto& offsets = lp["text_offset"];
    if (tokens.size() != logprobs.size() || tokens.size() != offsets.size())
      throw EchoUnsupported("echo response arrays disagree in length");
    if (tokens.empty() || offsets[0].get<long>() != 0)
      throw EchoUnsupported("response does not echo the prompt");

    std::size_t begin = tokens.size(), end = tokens.size();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      auto off = static_cast<std::size_t>(offsets[i].get<long>());
      if (off >= full.size()) {  // generated tokens past the echo
        end = i;
        break;
      }
      if (off >= prompt.size() && begin == tokens.size()) begin = i;
    }
    if (begin > end) begin = end;
    for (std::size_t i = begin; i < end; ++i) {
      if (logprobs[i].is_null()) throw EchoUnsupported("null logprob inside continuation");
      out.continuation_tokens.push_back(tokens[i].get<std::string>());
      out.continuation_logprobs.push_back(logprobs[i].get<double>());
    }
    out.span_begin = begin;
    out.span_end = end;
    return out;
  }

  std::optional<std::vector<std::string>> tokenize(const std::string& text) override {
    nlohmann::json body = base_body(text, cfg_.echo_max_tokens);
    body["echo"] = true;
    body["logprobs"] = 0;
    try {
      auto [resp, retries] = post(body);
      const auto& lp = logprobs_of(resp);
      std::vector<std::string> toks;
      const auto& offsets = lp.value("text_offset", nlohmann::json::array());
      for (std::size_t i = 0; i < lp["tokens"].size(); ++i) {
        if (i < offsets.size() && offsets[i].get<std::size_t>() >= text.size()) break;
        toks.push_back(lp["tokens"][i].get<std::string>());
      }
      return toks;
    } catch (const EchoUnsupported&) {
      return std::nullopt;
    } catch (const LogprobsUnsupported&) {
      return std::nullopt;
    }
  }

  std::string mode() const override { return "live(" + cfg_.endpoint + ", " + cfg_.model + ")"; }

 private:
  nlohmann::json base_body(const std::string& prompt, int max_tokens) const {
    nlohmann::json body{{"prompt", prompt}, {"max_tokens", max_tokens}, {"temperature", 0}};
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    return body;
  }

  static const nlohmann::json& logprobs_of(const nlohmann::json& resp) {
    const auto& choice = resp.at("choices").at(0);
    if (!choice.contains("logprobs") || choice["logprobs"].is_null())
      throw LogprobsUnsupported("endpoint returned no logprobs");
    return choice["logprobs"];
  }

  static Completion parse_completion(const nlohmann::json& resp, bool want_logprobs) {
    Completion c;
    if (!resp.contains("choices") || resp["choices"].empty())
      throw GatewayError("completion response has no choices");
    const auto& choice = resp["choices"][0];
    c.text = choice.value("text", "");
    if (!want_logprobs) return c;
    const auto& lp = logprobs_of(resp);
    for (const auto& t : lp.at("tokens")) c.tokens.push_back(t.get<std::string>());
    for (const auto& v : lp.at("token_logprobs"))
      c.token_logprobs.push_back(v.is_null() ? 0.0 : v.get<double>());
    if (lp.contains("top_logprobs") && lp["top_logprobs"].is_array()) {
      for (const auto& pos : lp["top_logprobs"]) {
        TokenLogprobs alt;
        if (pos.is_object())
          for (auto it = pos.begin(); it != pos.end(); ++it) alt[it.key()] = it.value().get<double>();
        c.top_alternatives.push_back(std::move(alt));
      }
    }
    return c;
  }

  [[noreturn]] static void classify_client_error(int status, const std::string& body) {
    std::string msg = detail::error_message(body);
    std::string low = detail::lower(msg);
    if (low.find("context length") != std::string::npos ||
        low.find("context window") != std::string::npos ||
        low.find("maximum context") != std::string::npos) {
      static const std::regex limit_re(R"(context length is (\d+))");
      static const std::regex req_re(R"(requested (\d+))");
      throw ContextOverflow("context overflow: " + msg, detail::first_match(msg, req_re),
                            detail::first_match(msg, limit_re));
    }
    if (low.find("echo") != std::string::npos) throw EchoUnsupported(msg);
    if (low.find("logprobs") != std::string::npos) throw LogprobsUnsupported(msg);
    throw GatewayError("HTTP " + std::to_string(status) + ": " + msg);
  }

  std::pair<nlohmann::json, int> post(const nlohmann::json& body) {
    RequestThrottle::Slot slot(throttle_);
    ++requests_;
    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        ++retries_;
        auto delay = cfg_.backoff_initial * (1LL << std::min(attempt - 1, 20));
        sleep_(std::min<std::chrono::milliseconds>(delay, cfg_.backoff_cap));
      }
      httplib::Client client(cfg_.endpoint);
      client.set_connection_timeout(cfg_.timeout);
      client.set_read_timeout(cfg_.timeout);
      httplib::Headers headers;
      if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
      auto res = client.Post(cfg_.completions_path, headers, payload, "application/json");
      if (!res) {
        last_error = "connection failed: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status >= 400) classify_client_error(res->status, res->body);
      auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded()) throw GatewayError("endpoint returned invalid JSON");
      return {std::move(j), attempt};
    }
    throw EndpointUnreachable(cfg_.endpoint + " unreachable after " +
                                  std::to_string(cfg_.max_retries + 1) + " attempts (" +
                                  last_error + ")",
                              cfg_.max_retries + 1);
  }

  HttpGatewayConfig cfg_;
  RequestThrottle throttle_;
  Sleeper sleep_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> retries_{0};
  std::atomic<std::size_t> nondeterministic_{0};
};

struct RemoteEmbedderConfig {
  std::string endpoint = "http://127.0.0.1:8080";
  std::string path = "/embedding";
  std::string api_key;
  std::chrono::seconds timeout{60};
};

// Per-token embeddings from a server that returns one vector per token
// (llama.cpp style `/embedding` with pooling disabled). Accepts either
// `[{"embedding": [[...], ...]}]` or `{"data": [{"embedding": [[...], ...]}]}`,
// with optional `"tokens"` alongside the embedding.
class RemoteEmbedder final : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig cfg) : cfg_(std::move(cfg)) {}

  TokenEmbeddings embed_tokens(const std::string& text) override {
    if (trim(text).empty()) throw ValidationError("nothing to embed");
    httplib::Client client(cfg_.endpoint);
    client.set_read_timeout(cfg_.timeout);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    auto res = client.Post(cfg_.path, headers, nlohmann::json{{"content", text}}.dump(),
                           "application/json");
    if (!res) throw EndpointUnreachable("embedding provider unreachable: " + httplib::to_string(res.error()), 1);
    if (res->status != 200)
      throw GatewayError("embedding provider HTTP " + std::to_string(res->status));
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    const nlohmann::json* item = nullptr;
    if (j.is_array() && !j.empty()) item = &j[0];
    else if (j.is_object() && j.contains("data") && !j["data"].empty()) item = &j["data"][0];
    if (!item || !item->contains("embedding"))
      throw GatewayError("embedding response not understood");

    TokenEmbeddings out;
    const auto& emb = (*item)["embedding"];
    for (const auto& row : emb) out.vectors.push_back(row.get<std::vector<double>>());
    if (item->contains("tokens"))
      for (const auto& t : (*item)["tokens"]) out.tokens.push_back(t.is_string() ? t.get<std::string>() : t.dump());
    else
      for (std::size_t i = 0; i < out.vectors.size(); ++i) out.tokens.push_back("#" + std::to_string(i));
    out.validate();
    return out;
  }

  std::string mode() const override { return "remote(" + cfg_.endpoint + cfg_.path + ")"; }

 private:
  RemoteEmbedderConfig cfg_;
};

}  // namespace lcmia
