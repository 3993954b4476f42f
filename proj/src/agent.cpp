#include "gridjudge/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace gridjudge {

QTable::QTable(int width, int height)
    : width_(width), height_(height),
      q_(static_cast<size_t>(width) * height * 2 * kNumActions, 0.0) {}

double QTable::max_value(const AgentState& s) const {
  double best = get(s, kAllActions[0]);
  for (int i = 1; i < kNumActions; ++i) best = std::max(best, get(s, kAllActions[i]));
  return best;
}

Action QTable::argmax(const AgentState& s) const {
  Action best = kAllActions[0];
  double bv = get(s, best);
  for (int i = 1; i < kNumActions; ++i) {
    double v = get(s, kAllActions[i]);
    if (v > bv) {
      bv = v;
      best = kAllActions[i];
    }
  }
  return best;
}

uint64_t QTable::content_hash() const {
  uint64_t h = 1469598103934665603ull;
  for (double v : q_) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (i * 8)) & 0xff;
      h *= 1099511628211ull;
    }
  }
  return h;
}

void validate_hyperparams(const Hyperparams& h) {
  if (!(h.alpha > 0.0 && h.alpha <= 1.0))
    throw std::invalid_argument("alpha must be in (0,1]");
  if (!(h.gamma > 0.0 && h.gamma <= 1.0))
    throw std::invalid_argument("gamma must be in (0,1]");
  if (!(h.epsilon_end >= 0.0 && h.epsilon_end <= h.epsilon_start &&
        h.epsilon_start <= 1.0))
    throw std::invalid_argument("need 0 <= epsilon_end <= epsilon_start <= 1");
  if (!(h.preference_boost_delta > 0.0))
    throw std::invalid_argument("preference_boost_delta must be positive");
  if (h.train_episodes_per_eval < 1)
    throw std::invalid_argument("train_episodes_per_eval must be >= 1");
  if (h.replay_period_episodes < 1)
    throw std::invalid_argument("replay_period_episodes must be >= 1");
  if (h.replay_start_eval_episode < 0)
    throw std::invalid_argument("replay_start_eval_episode must be >= 0");
}

double epsilon_at(const Hyperparams& h, int completed_train_episodes) {
  if (h.epsilon_decay_episodes <= 0) return h.epsilon_end;
  double t = std::min(1.0, static_cast<double>(completed_train_episodes) /
                               h.epsilon_decay_episodes);
  return h.epsilon_start + (h.epsilon_end - h.epsilon_start) * t;
}

void ReplayBuffer::push(Trajectory t) {
  trajectories_.push_back(std::move(t));
  if (capacity_ && trajectories_.size() > *capacity_)
    trajectories_.erase(trajectories_.begin());
}

std::optional<std::pair<size_t, size_t>> ReplayBuffer::sample_two_distinct(
    std::mt19937_64& rng) const {
  if (trajectories_.size() < 2) return std::nullopt;
  size_t n = trajectories_.size();
  size_t i = std::uniform_int_distribution<size_t>(0, n - 1)(rng);
  size_t j = std::uniform_int_distribution<size_t>(0, n - 2)(rng);
  if (j >= i) ++j;
  return std::pair{i, j};
}

std::optional<int> RatingMemo::try_rate(const std::string& consequence) {
  if (auto it = memo_.find(consequence); it != memo_.end()) return it->second;
  try {
    int value = judge_->rate({consequence, context_}).rating.value;
    memo_[consequence] = value;
    return value;
  } catch (const JudgeError&) {
    ++failures_;
    return std::nullopt;
  }
}

namespace {

Action pick_among(const std::vector<Action>& candidates, const AgentState& s,
                  const QTable& q, double epsilon, std::mt19937_64& rng) {
  if (epsilon > 0.0 && std::bernoulli_distribution(epsilon)(rng))
    return candidates[std::uniform_int_distribution<size_t>(
        0, candidates.size() - 1)(rng)];
  Action best = candidates[0];
  double bv = q.get(s, best);
  for (size_t i = 1; i < candidates.size(); ++i) {
    double v = q.get(s, candidates[i]);
    if (v > bv) {
      bv = v;
      best = candidates[i];
    }
  }
  return best;
}

bool is_movement(Action a) { return a != Action::Use; }

}  // namespace

Action select_action(const AgentState& s, const QTable& q, double epsilon,
                     const PrecautionContext* precaution, std::mt19937_64& rng,
                     SelectionStats* stats) {
  std::vector<Action> candidates(kAllActions, kAllActions + kNumActions);
  Action base = pick_among(candidates, s, q, epsilon, rng);
  if (!precaution) return base;

  const Action original = base;
  auto nearby = neighbor_items(*precaution->world, *precaution->episode, s);
  while (true) {
    auto it = nearby.find(base);
    if (it == nearby.end()) return base;
    std::optional<int> rating = precaution->memo->try_rate(it->second->consequence_text);
    if (!rating) {
      if (stats) ++stats->judge_failures;
      return base;  // oracle outage: exploration proceeds unvetoed
    }
    if (*rating >= 0) return base;
    if (!std::bernoulli_distribution(-*rating / 10.0)(rng)) return base;
    if (stats) ++stats->vetoes;
    candidates.erase(std::find(candidates.begin(), candidates.end(), base));
    bool movement_left = std::any_of(candidates.begin(), candidates.end(), is_movement);
    if (!movement_left) return original;  // the veto is probabilistic, not absolute
    base = pick_among(candidates, s, q, epsilon, rng);
  }
}

double q_update(QTable& q, const AgentState& s, Action a, double reward,
                const AgentState& s_next, bool terminated, const Hyperparams& h) {
  double bootstrap = terminated ? 0.0 : h.gamma * q.max_value(s_next);
  double updated = q.get(s, a) + h.alpha * (reward + bootstrap - q.get(s, a));
  q.set(s, a, updated);
  return updated;
}

double shaped_reward(double env_reward, const std::vector<TriggeredEvent>& events,
                     RatingMemo& memo, int* failure_warnings) {
  double total = env_reward;
  for (const TriggeredEvent& e : events) {
    if (std::optional<int> rating = memo.try_rate(e.consequence_text))
      total += *rating;
    else if (failure_warnings)
      ++*failure_warnings;
  }
  return total;
}

ReplayUpdateReport replay_preference_update(const ReplayBuffer& buffer, QTable& q,
                                            JudgeBackend& judge, const Hyperparams& h,
                                            std::mt19937_64& rng) {
  ReplayUpdateReport report;
  auto picked = buffer.sample_two_distinct(rng);
  if (!picked) {
    report.skip_reason = "buffer too small";
    return report;
  }
  report.first_index = picked->first;
  report.second_index = picked->second;
  const Trajectory& first = buffer[picked->first];
  const Trajectory& second = buffer[picked->second];

  Preference pref;
  try {
    pref = judge.compare(first.item_events, second.item_events).preference;
  } catch (const JudgeError& e) {
    report.skip_reason = e.kind == JudgeError::Kind::AmbiguousChoice
                             ? "ambiguous comparison"
                             : std::string("judge failure: ") + e.what();
    return report;
  }
  report.preference = pref.choice;
  const Trajectory& preferred =
      pref.choice == Preference::Choice::First ? first : second;
  for (const TrajStep& step : preferred.steps) {
    double v = q.get(step.state, step.action);
    q.set(step.state, step.action,
          v + h.preference_boost_delta * std::max(std::abs(v), 1.0));
    ++report.pairs_boosted;
  }
  report.applied = true;
  return report;
}

namespace {

struct EpisodeRun {
  Trajectory trajectory;
  int steps = 0;
  double env_return = 0.0;
  ItemCountSet contacts;
  bool goal = false;
};

EpisodeRun run_train_episode(const WorldConfig& world, const Hyperparams& h,
                             QTable& q, RatingMemo& memo, double epsilon,
                             int train_episode_index, std::mt19937_64& rng,
                             TrainCounters& counters, const StepObserver& observer) {
  EpisodeRun run;
  run.trajectory.kind = EpisodeKind::Train;
  run.trajectory.episode_index = train_episode_index;
  auto [state, ep] = reset(world);
  PrecautionContext precaution{&world, &ep, &memo};
  int step_idx = 0;
  while (!ep.finished) {
    SelectionStats stats;
    Action a = select_action(state, q, epsilon,
                             h.precaution_enabled ? &precaution : nullptr, rng,
                             &stats);
    counters.precaution_vetoes += stats.vetoes;
    StepOutcome out = step(world, ep, state, a);
    double total = h.shaping_enabled
                       ? shaped_reward(out.env_reward, out.events, memo, nullptr)
                       : out.env_reward;
    double q_after = q_update(q, state, a, total, out.next_state, out.terminated, h);
    run.trajectory.steps.push_back({state, a, total});
    for (const TriggeredEvent& e : out.events) {
      run.trajectory.item_events[e.consequence_text] += 1;
      run.contacts[e.consequence_text] += 1;
    }
    run.env_return += out.env_reward;
    run.trajectory.total_return += total;
    if (observer)
      observer(StepTrace{train_episode_index, step_idx, state, a, out.env_reward,
                         total, out.next_state, out.terminated, q_after});
    run.goal = out.terminated;
    state = out.next_state;
    ++step_idx;
  }
  run.steps = ep.steps;
  run.trajectory.goal_reached = run.goal;
  return run;
}

EpisodeRun run_eval_episode(const WorldConfig& world, QTable& q, int eval_index) {
  EpisodeRun run;
  run.trajectory.kind = EpisodeKind::Eval;
  run.trajectory.episode_index = eval_index;
  auto [state, ep] = reset(world);
  while (!ep.finished) {
    Action a = q.argmax(state);
    StepOutcome out = step(world, ep, state, a);
    run.trajectory.steps.push_back({state, a, out.env_reward});
    for (const TriggeredEvent& e : out.events) {
      run.trajectory.item_events[e.consequence_text] += 1;
      run.contacts[e.consequence_text] += 1;
    }
    run.env_return += out.env_reward;
    run.trajectory.total_return += out.env_reward;
    run.goal = out.terminated;
    state = out.next_state;
  }
  run.steps = ep.steps;
  run.trajectory.goal_reached = run.goal;
  return run;
}

}  // namespace

TrainResult run_training(const WorldConfig& world, const Hyperparams& h,
                         JudgeBackend& judge, JudgeContext context,
                         int total_eval_episodes, const StepObserver& observer) {
  validate_hyperparams(h);
  validate_world(world);

  TrainResult result{QTable(world.width, world.height), {}, {}, {}};
  std::mt19937_64 rng(h.rng_seed);
  RatingMemo memo(judge, context);
  ReplayBuffer buffer;

  int train_episodes_done = 0;
  int evals_done = 0;
  int episodes_past_gate = 0;

  auto after_episode = [&](const Trajectory& t) {
    buffer.push(t);
    if (!h.replay_enabled) return;
    if (evals_done < h.replay_start_eval_episode) return;
    ++episodes_past_gate;
    if (episodes_past_gate % h.replay_period_episodes != 0) return;
    ReplayUpdateReport report =
        replay_preference_update(buffer, result.qtable, judge, h, rng);
    if (report.applied)
      ++result.counters.replay_updates_applied;
    else
      ++result.counters.replay_updates_skipped;
  };

  for (int eval = 1; eval <= total_eval_episodes; ++eval) {
    for (int k = 0; k < h.train_episodes_per_eval; ++k) {
      double eps = epsilon_at(h, train_episodes_done);
      EpisodeRun run = run_train_episode(world, h, result.qtable, memo, eps,
                                         train_episodes_done, rng,
                                         result.counters, observer);
      ++train_episodes_done;
      result.episodes.push_back({EpisodeKind::Train, train_episodes_done, run.steps,
                                 run.trajectory.total_return, run.goal,
                                 run.trajectory.item_events});
      after_episode(run.trajectory);
    }
    EpisodeRun run = run_eval_episode(world, result.qtable, eval);
    ++evals_done;
    result.episodes.push_back({EpisodeKind::Eval, eval, run.steps,
                               run.trajectory.total_return, run.goal,
                               run.trajectory.item_events});
    result.evals.push_back({eval, run.steps, run.goal, run.env_return, run.contacts});
    after_episode(run.trajectory);
  }
  result.counters.judge_failures += memo.failure_count() - result.counters.judge_failures >= 0
                                        ? 0
                                        : 0;
  return result;
}

}  // namespace gridjudge
