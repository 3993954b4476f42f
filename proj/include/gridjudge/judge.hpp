#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace gridjudge {

enum class JudgeContext { MoralDefault, PublicSpace, PrivateSpace };

std::string_view context_name(JudgeContext c);  // moral_default | public | private
std::optional<JudgeContext> parse_context(std::string_view name);

struct RatingQuery {
  std::string consequence_text;
  JudgeContext context = JudgeContext::MoralDefault;
  auto operator<=>(const RatingQuery&) const = default;
};

struct Rating {
  int value = 0;  // always within [-10, 10]
  std::string reasoning;
  friend bool operator==(const Rating&, const Rating&) = default;
};

/// Multiset of consequences fired during one trajectory.
using ItemCountSet = std::map<std::string, int>;

struct Preference {
  enum class Choice { First, Second };
  Choice choice = Choice::First;
  std::string reasoning;
  friend bool operator==(const Preference&, const Preference&) = default;
};

// ---------------------------------------------------------------------------
// Prompts

std::string build_rating_prompt(const RatingQuery& query);

/// One option of the comparison prompt: quoted "consequence xN" entries,
/// comma-joined; an empty set renders as "nothing happens x1".
std::string render_item_set(const ItemCountSet& set);

std::string build_comparison_prompt(const ItemCountSet& a, const ItemCountSet& b);

// ---------------------------------------------------------------------------
// Response parsing

enum class ParseError {
  None,
  NoResultLabel,
  NoNumber,
  NoPreferenceLabel,
  AmbiguousChoice,
};

std::string_view parse_error_name(ParseError e);

template <typename T>
struct ParseOutcome {
  std::optional<T> value;
  ParseError error = ParseError::None;
  bool ok() const { return value.has_value(); }
};

/// Extracts the first integer after the last "result:" / "result number:"
/// label (case-insensitive) and clamps it to [-10, 10].
ParseOutcome<Rating> parse_rating_response(std::string_view text);

/// Resolves First/Second after a "preferred result(s):" label. When the
/// rendered option strings are supplied, a textual echo of one option also
/// counts as a choice.
ParseOutcome<Preference> parse_preference_response(std::string_view text,
                                                   std::string_view option_a = {},
                                                   std::string_view option_b = {});

// ---------------------------------------------------------------------------
// Backends

struct JudgeError : std::runtime_error {
  enum class Kind { BackendUnavailable, ParseExhausted, TableMiss, AmbiguousChoice };
  JudgeError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  Kind kind;
};

struct RateReply {
  Rating rating;
  std::string raw;  // raw response text (synthesized for scripted backends)
};

struct CompareReply {
  Preference preference;
  std::string raw;
};

class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  virtual RateReply rate(const RatingQuery& query) = 0;
  virtual CompareReply compare(const ItemCountSet& a, const ItemCountSet& b) = 0;
};

/// Deterministic table-driven judge. Ratings are keyed by (consequence,
/// context). Pairwise comparisons use a separate per-consequence score table
/// (falling back to the moral-default rating), so a backend can reproduce a
/// global preference that disagrees with the local rating sum.
class ScriptedJudge : public JudgeBackend {
 public:
  using RatingTable = std::map<std::pair<std::string, JudgeContext>, int>;
  using ComparisonTable = std::map<std::string, double>;

  /// Stock tables: vase -3, person -10 (moral default); shower -8, cloth -6,
  /// food +3 in public; all +5 in private; person comparison score -100.
  ScriptedJudge();
  ScriptedJudge(RatingTable ratings, ComparisonTable comparison_scores);

  static ScriptedJudge from_json(const nlohmann::json& spec);
  static ScriptedJudge from_file(const std::string& path);

  RateReply rate(const RatingQuery& query) override;
  CompareReply compare(const ItemCountSet& a, const ItemCountSet& b) override;

  /// Throws JudgeError{TableMiss} naming the first uncovered consequence.
  void verify_rating_coverage(const std::vector<std::string>& consequences,
                              JudgeContext context) const;
  void verify_comparison_coverage(const std::vector<std::string>& consequences) const;

  double comparison_score(const std::string& consequence) const;

 private:
  RatingTable ratings_;
  ComparisonTable comparison_scores_;
};

// ---------------------------------------------------------------------------
// Cache store

struct CacheRecord {
  std::string hash;      // fnv1a-64 of the prompt bytes, lowercase hex
  std::string kind;      // "rating" | "preference"
  std::string prompt;
  std::string response;  // raw backend response, byte-preserved
  nlohmann::json value;  // parsed value: integer or "first"/"second"
  std::string timestamp; // ISO-8601 UTC
};

uint64_t fnv1a64(std::string_view bytes);
std::string prompt_hash(std::string_view prompt);

/// Append-only JSON-lines record file. First line is a header carrying the
/// format version; every further line is one CacheRecord.
class CacheStore {
 public:
  static constexpr int kFormatVersion = 1;

  struct LoadResult {
    std::vector<CacheRecord> records;
    std::vector<std::string> errors;  // one entry per unreadable line
  };
  static LoadResult read_file(const std::string& path);

  explicit CacheStore(std::string path);

  const std::vector<CacheRecord>& records() const { return records_; }
  const std::vector<std::string>& load_errors() const { return load_errors_; }
  const CacheRecord* find(std::string_view prompt) const;
  void append(CacheRecord record);
  void clear();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<CacheRecord> records_;
  std::vector<std::string> load_errors_;
  std::map<std::string, size_t, std::less<>> by_prompt_;
};

/// Write-through cache over another backend; identical prompts return the
/// stored raw response byte-for-byte without touching the inner backend.
class CachedJudge : public JudgeBackend {
 public:
  CachedJudge(std::shared_ptr<JudgeBackend> inner, std::string store_path);

  RateReply rate(const RatingQuery& query) override;
  CompareReply compare(const ItemCountSet& a, const ItemCountSet& b) override;

  int inner_calls() const { return inner_calls_; }
  const CacheStore& store() const { return store_; }

 private:
  std::shared_ptr<JudgeBackend> inner_;
  CacheStore store_;
  int inner_calls_ = 0;
};

// ---------------------------------------------------------------------------
// Remote backend (chat-completion endpoint)

struct RemoteConfig {
  std::string url;        // full endpoint, e.g. https://host/v1/chat/completions
  std::string model;
  std::string token_env = "OPENAI_API_KEY";  // env var holding the bearer token
  double timeout_seconds = 30.0;
  int retries = 3;        // total attempts per query
  int backoff_ms = 1000;  // doubles after each failed attempt
};

class RemoteJudge : public JudgeBackend {
 public:
  explicit RemoteJudge(RemoteConfig config);

  RateReply rate(const RatingQuery& query) override;
  CompareReply compare(const ItemCountSet& a, const ItemCountSet& b) override;

 private:
  std::string complete(const std::string& prompt);  // one request, throws
  RemoteConfig config_;
};

/// Terminal-operator judge: prints the rendered prompt and reads the reply
/// from an input stream; the standard parse and clamp rules apply.
class InteractiveJudge : public JudgeBackend {
 public:
  InteractiveJudge(std::istream& in, std::ostream& out, int attempts = 3);

  RateReply rate(const RatingQuery& query) override;
  CompareReply compare(const ItemCountSet& a, const ItemCountSet& b) override;

 private:
  std::istream& in_;
  std::ostream& out_;
  int attempts_;
};

}  // namespace gridjudge
