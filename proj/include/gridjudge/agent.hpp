#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gridjudge/judge.hpp"
#include "gridjudge/world.hpp"

namespace gridjudge {

/// Dense action values over the reduced state space (cell x has_key).
/// Unvisited entries read as exactly 0.
class QTable {
 public:
  QTable(int width, int height);

  double get(const AgentState& s, Action a) const { return q_[index(s, a)]; }
  void set(const AgentState& s, Action a, double v) { q_[index(s, a)] = v; }
  double max_value(const AgentState& s) const;
  /// Greedy action with deterministic lowest-index tie-break (enum order).
  Action argmax(const AgentState& s) const;

  uint64_t content_hash() const;
  const std::vector<double>& values() const { return q_; }
  int width() const { return width_; }
  int height() const { return height_; }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  size_t index(const AgentState& s, Action a) const {
    return ((static_cast<size_t>(s.position.row) * width_ + s.position.col) * 2 +
            (s.has_key ? 1 : 0)) *
               kNumActions +
           static_cast<size_t>(a);
  }
  int width_;
  int height_;
  std::vector<double> q_;
};

struct Hyperparams {
  double alpha = 0.1;
  double gamma = 0.99;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_episodes = 2000;  // training episodes to reach epsilon_end
  bool precaution_enabled = false;
  bool shaping_enabled = false;
  bool replay_enabled = false;
  int replay_period_episodes = 10;
  int replay_start_eval_episode = 0;
  double preference_boost_delta = 0.05;
  int train_episodes_per_eval = 10;
  uint64_t rng_seed = 1;
};

/// Throws std::invalid_argument when a field is out of range.
void validate_hyperparams(const Hyperparams& h);

/// Epsilon after `completed_train_episodes` training episodes: linear decay
/// from epsilon_start to epsilon_end over epsilon_decay_episodes.
double epsilon_at(const Hyperparams& h, int completed_train_episodes);

enum class EpisodeKind { Train, Eval };

struct TrajStep {
  AgentState state;
  Action action = Action::Up;
  double reward = 0.0;  // total reward used for the update at this step
};

struct Trajectory {
  std::vector<TrajStep> steps;
  ItemCountSet item_events;
  EpisodeKind kind = EpisodeKind::Train;
  int episode_index = 0;
  double total_return = 0.0;
  bool goal_reached = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::optional<size_t> capacity = std::nullopt)
      : capacity_(capacity) {}

  void push(Trajectory t);
  size_t size() const { return trajectories_.size(); }
  const Trajectory& operator[](size_t i) const { return trajectories_[i]; }

  /// Two distinct indices, uniform; nullopt when fewer than two trajectories.
  std::optional<std::pair<size_t, size_t>> sample_two_distinct(
      std::mt19937_64& rng) const;

 private:
  std::optional<size_t> capacity_;
  std::vector<Trajectory> trajectories_;
};

/// Per-run rating memo: each (consequence, context) is fetched from the judge
/// once and reused; failures are counted and retried on the next request.
class RatingMemo {
 public:
  RatingMemo(JudgeBackend& judge, JudgeContext context)
      : judge_(&judge), context_(context) {}

  /// nullopt when the judge failed for this consequence right now.
  std::optional<int> try_rate(const std::string& consequence);

  int failure_count() const { return failures_; }
  JudgeContext context() const { return context_; }

 private:
  JudgeBackend* judge_;
  JudgeContext context_;
  std::map<std::string, int> memo_;
  int failures_ = 0;
};

struct PrecautionContext {
  const WorldConfig* world = nullptr;
  const Episode* episode = nullptr;
  RatingMemo* memo = nullptr;
};

struct SelectionStats {
  int vetoes = 0;
  int judge_failures = 0;
};

/// Epsilon-greedy base choice (one Bernoulli draw when epsilon > 0, one
/// uniform draw when it explores), then the precaution veto loop when a
/// precaution context is supplied: a chosen movement action whose target cell
/// holds an unconsumed item rated n < 0 is vetoed with probability |n|/10 and
/// the choice re-runs over the remaining actions; once all four movement
/// actions are vetoed the original base choice stands.
Action select_action(const AgentState& s, const QTable& q, double epsilon,
                     const PrecautionContext* precaution, std::mt19937_64& rng,
                     SelectionStats* stats = nullptr);

/// One-step tabular update; returns the new Q(s, a).
double q_update(QTable& q, const AgentState& s, Action a, double reward,
                const AgentState& s_next, bool terminated, const Hyperparams& h);

/// env_reward plus the judge rating of every fired event; a failed rating
/// contributes 0 and bumps *failure_warnings.
double shaped_reward(double env_reward, const std::vector<TriggeredEvent>& events,
                     RatingMemo& memo, int* failure_warnings = nullptr);

struct ReplayUpdateReport {
  bool applied = false;
  size_t first_index = 0;
  size_t second_index = 0;
  std::optional<Preference::Choice> preference;
  int pairs_boosted = 0;
  std::string skip_reason;
};

/// Samples two distinct trajectories, asks the judge which item multiset is
/// preferable, and boosts Q along the winner: Q <- Q + delta * max(|Q|, 1).
/// Ties and judge failures skip the round.
ReplayUpdateReport replay_preference_update(const ReplayBuffer& buffer, QTable& q,
                                            JudgeBackend& judge,
                                            const Hyperparams& h,
                                            std::mt19937_64& rng);

struct EvalMetrics {
  int eval_index = 0;  // 1-based
  int steps = 0;
  bool goal_reached = false;
  double env_return = 0.0;
  ItemCountSet item_contacts;
};

struct EpisodeSummary {
  EpisodeKind kind = EpisodeKind::Train;
  int index = 0;  // per-kind, 1-based
  int steps = 0;
  double total_return = 0.0;
  bool goal_reached = false;
  ItemCountSet item_events;
};

struct TrainCounters {
  int judge_failures = 0;
  int precaution_vetoes = 0;
  int replay_updates_applied = 0;
  int replay_updates_skipped = 0;
};

struct StepTrace {
  int train_episode = 0;  // 0-based
  int step = 0;           // 0-based within the episode
  AgentState state;
  Action action = Action::Up;
  double env_reward = 0.0;
  double total_reward = 0.0;
  AgentState next_state;
  bool terminated = false;
  double q_after = 0.0;
};

using StepObserver = std::function<void(const StepTrace&)>;

struct TrainResult {
  QTable qtable;
  std::vector<EvalMetrics> evals;
  std::vector<EpisodeSummary> episodes;
  TrainCounters counters;
};

/// Cycles of train_episodes_per_eval training episodes followed by one greedy
/// evaluation episode (epsilon 0, precaution off, no updates). Every episode
/// lands in the replay buffer; once total_eval_episodes evaluations ran the
/// final Q-table and metrics are returned. The observer, when set, sees every
/// training step.
TrainResult run_training(const WorldConfig& world, const Hyperparams& h,
                         JudgeBackend& judge, JudgeContext context,
                         int total_eval_episodes,
                         const StepObserver& observer = {});

}  // namespace gridjudge
