/*
 * Copyright 2026 The mofcure Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "mofcure/error.hpp"

namespace mofcure::agents {

using nlohmann::json;

struct Message {
  std::string role;  ///< "system", "user", "assistant"
  std::string content;
};

/// One structured completion request. `purpose` names the response schema
/// ("head", "extract_paper", "find_missing"); `signature` fingerprints the
/// requesting agent's node registry so replays detect a changed agent tree.
struct ChatRequest {
  std::string agent;
  std::string purpose;
  std::string signature;
  std::vector<Message> messages;
  json schema;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Raw response text; callers validate it against `req.schema`.
  virtual std::string complete(const ChatRequest& req) = 0;
};

// -------------------------------------------------------------------
// Transcripts
// -------------------------------------------------------------------
// Line-delimited JSON. Line 1 is a header {"format":"mofcure-transcript","version":1};
// every further line is one exchange:
//   {"seq":N,"agent":...,"purpose":...,"signature":...,"response":"<raw text>"}
// Keys are written sorted; replay checks agent, purpose and signature.

struct TranscriptEntry {
  int seq = 0;
  std::string agent, purpose, signature, response;
};

inline std::string transcript_header() { return json{{"format", "mofcure-transcript"}, {"version", 1}}.dump(); }

inline std::string transcript_line(const TranscriptEntry& e) {
  return json{{"seq", e.seq}, {"agent", e.agent}, {"purpose", e.purpose}, {"signature", e.signature}, {"response", e.response}}
      .dump();
}

inline std::vector<TranscriptEntry> parse_transcript(std::istream& in) {
  std::vector<TranscriptEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(Errc::TranscriptMismatch, "transcript line " + std::to_string(lineno) + ": " + e.what());
    }
    if (lineno == 1) {
      if (j.value("format", "") != "mofcure-transcript") fail(Errc::TranscriptMismatch, "not a transcript file");
      continue;
    }
    TranscriptEntry e;
    try {
      e.seq = j.at("seq").get<int>();
      e.agent = j.at("agent").get<std::string>();
      e.purpose = j.at("purpose").get<std::string>();
      e.signature = j.at("signature").get<std::string>();
      e.response = j.at("response").get<std::string>();
    } catch (const json::exception& ex) {
      fail(Errc::TranscriptMismatch, "transcript line " + std::to_string(lineno) + ": " + ex.what());
    }
    out.push_back(std::move(e));
  }
  return out;
}

/// Plays back recorded responses in order.
class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(std::vector<TranscriptEntry> entries) : entries_(std::move(entries)) {}

  static std::unique_ptr<ReplayBackend> from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::Io, "cannot open transcript " + path);
    return std::make_unique<ReplayBackend>(parse_transcript(in));
  }

  std::string complete(const ChatRequest& req) override {
    std::lock_guard lock(mu_);
    if (next_ >= entries_.size())
      fail(Errc::TranscriptMismatch, "transcript exhausted at request " + std::to_string(next_ + 1) + " from " + req.agent);
    const auto& e = entries_[next_];
    if (e.agent != req.agent || e.purpose != req.purpose || e.signature != req.signature)
      fail(Errc::TranscriptMismatch, "request " + std::to_string(next_ + 1) + ": recorded " + e.agent + "/" + e.purpose +
                                         " [" + e.signature + "], got " + req.agent + "/" + req.purpose + " [" +
                                         req.signature + "]");
    ++next_;
    return e.response;
  }

  std::size_t remaining() const { return entries_.size() - next_; }

 private:
  std::vector<TranscriptEntry> entries_;
  std::size_t next_ = 0;
  std::mutex mu_;
};

/// Forwards to another backend and keeps every exchange.
class RecordingBackend : public ChatBackend {
 public:
  explicit RecordingBackend(ChatBackend& inner) : inner_(inner) {}

  std::string complete(const ChatRequest& req) override {
    std::string r = inner_.complete(req);
    std::lock_guard lock(mu_);
    entries_.push_back({static_cast<int>(entries_.size()) + 1, req.agent, req.purpose, req.signature, r});
    return r;
  }

  std::string transcript() const {
    std::string out = transcript_header() + "\n";
    for (const auto& e : entries_) out += transcript_line(e) + "\n";
    return out;
  }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::Io, "cannot write " + path);
    out << transcript();
  }

  const std::vector<TranscriptEntry>& entries() const { return entries_; }

 private:
  ChatBackend& inner_;
  std::vector<TranscriptEntry> entries_;
  std::mutex mu_;
};

/// Returns canned responses in order, whatever the request.
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> responses) : responses_(std::move(responses)) {}

  std::string complete(const ChatRequest& req) override {
    std::lock_guard lock(mu_);
    requests_.push_back(req);
    if (next_ >= responses_.size()) fail(Errc::TranscriptMismatch, "scripted backend ran out of responses");
    return responses_[next_++];
  }

  const std::vector<ChatRequest>& requests() const { return requests_; }

 private:
  std::vector<std::string> responses_;
  std::vector<ChatRequest> requests_;
  std::size_t next_ = 0;
  std::mutex mu_;
};

// -------------------------------------------------------------------
// Live chat-completion endpoint
// -------------------------------------------------------------------

struct HttpConfig {
  std::string endpoint;     ///< base URL, e.g. http://localhost:8000
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  double temperature = 0.0;
  int timeout_s = 120;
  std::string api_key;      ///< taken from MOFCURE_API_KEY when empty

  static HttpConfig from_env(std::string endpoint = {}) {
    HttpConfig c;
    c.endpoint = endpoint;
    if (c.endpoint.empty())
      if (const char* e = std::getenv("MOFCURE_ENDPOINT")) c.endpoint = e;
    if (const char* m = std::getenv("MOFCURE_MODEL")) c.model = m;
    if (const char* k = std::getenv("MOFCURE_API_KEY")) c.api_key = k;
    return c;
  }
};

/// OpenAI-style chat completion with a JSON-schema response format. The
/// request body is
///   {"model":..., "temperature":..., "messages":[{"role","content"}...],
///    "response_format":{"type":"json_schema","json_schema":{"name":<purpose>,"schema":<schema>}}}
/// and the reply text is choices[0].message.content.
class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(HttpConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty()) fail(Errc::Config, "no chat endpoint configured");
    if (cfg_.endpoint.rfind("https://", 0) == 0 && !https_supported())
      fail(Errc::Config, "https endpoints need a build with MOFCURE_HTTPS=ON");
  }

  static constexpr bool https_supported() {
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
    return true;
#else
    return false;
#endif
  }

  static json request_body(const HttpConfig& cfg, const ChatRequest& req) {
    json msgs = json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", cfg.model},
            {"temperature", cfg.temperature},
            {"messages", msgs},
            {"response_format", {{"type", "json_schema"}, {"json_schema", {{"name", req.purpose}, {"schema", req.schema}}}}}};
  }

  std::string complete(const ChatRequest& req) override {
    httplib::Client cli(cfg_.endpoint);
    cli.set_read_timeout(cfg_.timeout_s, 0);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    auto res = cli.Post(cfg_.path, headers, request_body(cfg_, req).dump(), "application/json");
    if (!res) fail(Errc::Io, "chat endpoint unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) fail(Errc::Io, "chat endpoint returned HTTP " + std::to_string(res->status));
    try {
      return json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      fail(Errc::BackendSchemaFailure, std::string("unexpected chat response: ") + e.what());
    }
  }

 private:
  HttpConfig cfg_;
};

// -------------------------------------------------------------------
// Structured calls with bounded retries
// -------------------------------------------------------------------

/// Sends `req`, hands the parsed JSON to `accept` (which throws Error on a
/// schema violation) and retries with the complaint appended. `attempts`
/// receives the number of requests made.
template <class Accept>
auto structured_call(ChatBackend& backend, ChatRequest req, Accept&& accept, int max_retries, Errc on_failure,
                     int* attempts = nullptr, std::vector<std::string>* rejections = nullptr) {
  std::string last_error;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    if (attempts) *attempts = attempt + 1;
    std::string text = backend.complete(req);
    try {
      json j;
      try {
        j = json::parse(text);
      } catch (const json::exception& e) {
        fail(Errc::ValidationError, std::string("response is not JSON: ") + e.what());
      }
      return accept(j);
    } catch (const Error& e) {
      if (e.code() == Errc::TranscriptMismatch || e.code() == Errc::Io) throw;
      last_error = e.what();
      if (rejections) rejections->push_back(last_error);
      req.messages.push_back({"assistant", text});
      req.messages.push_back({"user", "The response was rejected: " + last_error + ". Reply again with valid JSON."});
    }
  }
  fail(on_failure, req.agent + "/" + req.purpose + " failed after " + std::to_string(max_retries + 1) +
                       " attempts: " + last_error);
}

}  // namespace mofcure::agents
