#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "gridjudge/judge.hpp"
#include "json.hpp"

namespace gridjudge {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;  // httplib client target
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw JudgeError(JudgeError::Kind::BackendUnavailable,
                     "remote judge url missing scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

RemoteJudge::RemoteJudge(RemoteConfig config) : config_(std::move(config)) {}

std::string RemoteJudge::complete(const std::string& prompt) {
  ParsedUrl target = split_url(config_.url);
  httplib::Client client(target.scheme_host_port);
  client.set_connection_timeout(std::chrono::duration<double>(config_.timeout_seconds));
  client.set_read_timeout(std::chrono::duration<double>(config_.timeout_seconds));
  client.set_write_timeout(std::chrono::duration<double>(config_.timeout_seconds));

  httplib::Headers headers;
  if (!config_.token_env.empty()) {
    if (const char* token = std::getenv(config_.token_env.c_str());
        token && *token)
      headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  nlohmann::json body = {
      {"model", config_.model},
      {"temperature", 0},
      {"messages", {{{"role", "user"}, {"content", prompt}}}},
  };
  auto res = client.Post(target.path, headers, body.dump(), "application/json");
  if (!res)
    throw JudgeError(JudgeError::Kind::BackendUnavailable,
                     "remote judge transport error: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw JudgeError(JudgeError::Kind::BackendUnavailable,
                     "remote judge HTTP " + std::to_string(res->status) + ": " + res->body);
  try {
    nlohmann::json reply = nlohmann::json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw JudgeError(JudgeError::Kind::BackendUnavailable,
                     std::string("remote judge malformed completion body: ") + e.what());
  }
}

RateReply RemoteJudge::rate(const RatingQuery& query) {
  std::string prompt = build_rating_prompt(query);
  std::string last_error = "no attempts made";
  JudgeError::Kind last_kind = JudgeError::Kind::BackendUnavailable;
  for (int attempt = 0; attempt < std::max(1, config_.retries); ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
    try {
      std::string text = complete(prompt);
      auto parsed = parse_rating_response(text);
      if (parsed.ok()) return {*parsed.value, text};
      last_kind = JudgeError::Kind::ParseExhausted;
      last_error = std::string(parse_error_name(parsed.error)) + " in reply: " + text;
    } catch (const JudgeError& e) {
      last_kind = e.kind;
      last_error = e.what();
    }
  }
  throw JudgeError(last_kind, "remote rating failed after " +
                                  std::to_string(std::max(1, config_.retries)) +
                                  " attempts: " + last_error);
}

CompareReply RemoteJudge::compare(const ItemCountSet& a, const ItemCountSet& b) {
  std::string prompt = build_comparison_prompt(a, b);
  std::string option_a = render_item_set(a);
  std::string option_b = render_item_set(b);
  std::string last_error = "no attempts made";
  JudgeError::Kind last_kind = JudgeError::Kind::BackendUnavailable;
  for (int attempt = 0; attempt < std::max(1, config_.retries); ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
    try {
      std::string text = complete(prompt);
      auto parsed = parse_preference_response(text, option_a, option_b);
      if (parsed.ok()) return {*parsed.value, text};
      last_kind = parsed.error == ParseError::AmbiguousChoice
                      ? JudgeError::Kind::AmbiguousChoice
                      : JudgeError::Kind::ParseExhausted;
      last_error = std::string(parse_error_name(parsed.error)) + " in reply: " + text;
    } catch (const JudgeError& e) {
      last_kind = e.kind;
      last_error = e.what();
    }
  }
  throw JudgeError(last_kind, "remote comparison failed after " +
                                  std::to_string(std::max(1, config_.retries)) +
                                  " attempts: " + last_error);
}

}  // namespace gridjudge
