#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gridjudge {

struct GridPos {
  int row = 0;
  int col = 0;
  auto operator<=>(const GridPos&) const = default;
};

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3, Use = 4 };

inline constexpr int kNumActions = 5;
inline constexpr Action kAllActions[kNumActions] = {
    Action::Up, Action::Down, Action::Left, Action::Right, Action::Use};
inline constexpr Action kMovementActions[4] = {Action::Up, Action::Down,
                                               Action::Left, Action::Right};

/// Row/col displacement of a movement action; Use is {0,0}.
GridPos action_delta(Action a);
std::string_view action_name(Action a);
std::optional<Action> parse_action(std::string_view name);

enum class TriggerMode { OnEnter, OnUse };

std::string_view trigger_name(TriggerMode t);

struct Item {
  std::string id;                // unique within a world, e.g. "V0"
  GridPos position;
  std::string name;              // short label, e.g. "vase"
  std::string consequence_text;  // used verbatim in judge prompts
  TriggerMode trigger = TriggerMode::OnEnter;
  bool consumed = false;         // per-episode; false in a WorldConfig
  friend bool operator==(const Item&, const Item&) = default;
};

struct WorldConfig {
  int width = 10;
  int height = 10;
  std::set<GridPos> walls;  // must include the full outer ring
  std::vector<Item> items;
  std::optional<GridPos> key_position;
  GridPos door_position;
  GridPos agent_start;
  bool key_required = true;
  double goal_reward = 100.0;
  double step_penalty = -0.1;
  int max_steps = 200;

  bool in_bounds(GridPos p) const {
    return p.row >= 0 && p.row < height && p.col >= 0 && p.col < width;
  }
  bool is_wall(GridPos p) const { return walls.count(p) > 0; }
  bool on_outer_ring(GridPos p) const {
    return p.row == 0 || p.row == height - 1 || p.col == 0 || p.col == width - 1;
  }
  const Item* item_at(GridPos p) const;
  /// Distinct consequence texts, sorted.
  std::vector<std::string> consequence_texts() const;

  friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

/// Complete Q-table state: agent cell plus inventory. Item consumption is
/// deliberately not part of it (reduced representation).
struct AgentState {
  GridPos position;
  bool has_key = false;
  auto operator<=>(const AgentState&) const = default;
};

struct TriggeredEvent {
  std::string item_id;
  std::string consequence_text;
  friend bool operator==(const TriggeredEvent&, const TriggeredEvent&) = default;
};

struct StepOutcome {
  AgentState next_state;
  double env_reward = 0.0;  // environment-native only; shaping lives elsewhere
  std::vector<TriggeredEvent> events;
  bool terminated = false;
  bool truncated = false;
};

/// Mutable per-episode state. The WorldConfig itself is never modified.
struct Episode {
  std::vector<Item> items;   // copies of world items with live consumed flags
  bool key_available = false;
  int steps = 0;
  bool finished = false;

  const Item* unconsumed_item_at(GridPos p) const;
  Item* unconsumed_item_at(GridPos p);
};

struct WorldError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Throws WorldError (with cell coordinates where relevant) if any invariant
/// is violated.
void validate_world(const WorldConfig& w);

/// Parses the textual world format (scalar fields + ASCII map block + item
/// legend; see docs/world_format.md) and validates the result.
WorldConfig load_world(const std::string& text);
WorldConfig load_world_file(const std::string& path);

/// Canonical text form; load_world(serialize_world(w)) == w for any world
/// loaded from text.
std::string serialize_world(const WorldConfig& w);

std::pair<AgentState, Episode> reset(const WorldConfig& w);

/// Advances one step. Throws WorldError if the episode is already finished.
StepOutcome step(const WorldConfig& w, Episode& ep, const AgentState& state,
                 Action action);

/// Unconsumed OnEnter items in the four neighboring cells, keyed by the
/// movement action that would enter them. OnUse items are not veto material.
std::map<Action, const Item*> neighbor_items(const WorldConfig& w,
                                             const Episode& ep,
                                             const AgentState& state);

}  // namespace gridjudge
