#include "gridjudge/world.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace gridjudge {

namespace {

std::string pos_str(GridPos p) {
  return "(" + std::to_string(p.row) + "," + std::to_string(p.col) + ")";
}

std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

GridPos action_delta(Action a) {
  switch (a) {
    case Action::Up: return {-1, 0};
    case Action::Down: return {1, 0};
    case Action::Left: return {0, -1};
    case Action::Right: return {0, 1};
    case Action::Use: return {0, 0};
  }
  return {0, 0};
}

std::string_view action_name(Action a) {
  switch (a) {
    case Action::Up: return "UP";
    case Action::Down: return "DOWN";
    case Action::Left: return "LEFT";
    case Action::Right: return "RIGHT";
    case Action::Use: return "USE";
  }
  return "?";
}

std::optional<Action> parse_action(std::string_view name) {
  std::string u;
  for (char c : name) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  for (Action a : kAllActions)
    if (u == action_name(a)) return a;
  return std::nullopt;
}

std::string_view trigger_name(TriggerMode t) {
  return t == TriggerMode::OnEnter ? "on_enter" : "on_use";
}

const Item* WorldConfig::item_at(GridPos p) const {
  for (const Item& it : items)
    if (it.position == p) return &it;
  return nullptr;
}

std::vector<std::string> WorldConfig::consequence_texts() const {
  std::set<std::string> uniq;
  for (const Item& it : items) uniq.insert(it.consequence_text);
  return {uniq.begin(), uniq.end()};
}

const Item* Episode::unconsumed_item_at(GridPos p) const {
  for (const Item& it : items)
    if (it.position == p && !it.consumed) return &it;
  return nullptr;
}

Item* Episode::unconsumed_item_at(GridPos p) {
  for (Item& it : items)
    if (it.position == p && !it.consumed) return &it;
  return nullptr;
}

void validate_world(const WorldConfig& w) {
  if (w.width < 3 || w.height < 3)
    throw WorldError("world must be at least 3x3, got " + std::to_string(w.width) +
                     "x" + std::to_string(w.height));
  if (w.max_steps < 1) throw WorldError("max_steps must be >= 1");
  if (w.step_penalty > 0) throw WorldError("step_penalty must not be positive");

  for (GridPos p : w.walls)
    if (!w.in_bounds(p)) throw WorldError("wall out of bounds at " + pos_str(p));

  // Items on wall cells first, so an item drawn onto the ring reports as
  // "item on wall" rather than a generic ring failure.
  std::set<GridPos> occupied;
  std::set<std::string> ids;
  for (const Item& it : w.items) {
    if (!w.in_bounds(it.position))
      throw WorldError("item " + it.id + " out of bounds at " + pos_str(it.position));
    if (w.is_wall(it.position) || w.on_outer_ring(it.position))
      throw WorldError("item " + it.id + " on wall at " + pos_str(it.position));
    if (!occupied.insert(it.position).second)
      throw WorldError("cell occupancy: two items on cell " + pos_str(it.position));
    if (it.consequence_text.empty())
      throw WorldError("item " + it.id + " has empty consequence text");
    if (!ids.insert(it.id).second)
      throw WorldError("duplicate item id " + it.id);
  }

  for (int r = 0; r < w.height; ++r)
    for (int c = 0; c < w.width; ++c) {
      GridPos p{r, c};
      if (w.on_outer_ring(p) && !w.is_wall(p))
        throw WorldError("outer ring cell " + pos_str(p) + " is not a wall");
    }

  auto check_special = [&](GridPos p, const char* what) {
    if (!w.in_bounds(p)) throw WorldError(std::string(what) + " out of bounds at " + pos_str(p));
    if (w.is_wall(p)) throw WorldError(std::string(what) + " on wall cell " + pos_str(p));
  };
  check_special(w.agent_start, "agent start");
  check_special(w.door_position, "door");
  if (w.key_position) check_special(*w.key_position, "key");
  if (w.key_required && !w.key_position)
    throw WorldError("key required but no key cell present");
  if (w.key_position && *w.key_position == w.door_position)
    throw WorldError("key and door share cell " + pos_str(w.door_position));
  if (w.agent_start == w.door_position)
    throw WorldError("agent start on door cell " + pos_str(w.door_position));
  for (const Item& it : w.items) {
    if (w.key_position && it.position == *w.key_position)
      throw WorldError("item " + it.id + " on key cell " + pos_str(it.position));
    if (it.position == w.door_position)
      throw WorldError("item " + it.id + " on door cell " + pos_str(it.position));
  }
}

namespace {

struct LegendEntry {
  std::string name;
  std::string consequence;
  TriggerMode trigger;
};

[[noreturn]] void parse_fail(int line_no, const std::string& msg) {
  throw WorldError("world parse error at line " + std::to_string(line_no) + ": " + msg);
}

// Splits an item legend line body: <letter> <name> "<consequence>" <trigger>
LegendEntry parse_legend(int line_no, const std::string& body, char& letter) {
  std::istringstream in(body);
  std::string letter_tok, name, trigger_tok;
  if (!(in >> letter_tok) || letter_tok.size() != 1)
    parse_fail(line_no, "item legend needs a single map letter");
  letter = letter_tok[0];
  if (!(in >> name)) parse_fail(line_no, "item legend missing name");
  in >> std::ws;
  if (in.peek() != '"') parse_fail(line_no, "item consequence must be double-quoted");
  in.get();
  std::string consequence;
  std::getline(in, consequence, '"');
  if (!in) parse_fail(line_no, "unterminated consequence string");
  if (!(in >> trigger_tok)) parse_fail(line_no, "item legend missing trigger");
  TriggerMode trig;
  if (trigger_tok == "on_enter")
    trig = TriggerMode::OnEnter;
  else if (trigger_tok == "on_use")
    trig = TriggerMode::OnUse;
  else
    parse_fail(line_no, "unknown trigger '" + trigger_tok + "' (want on_enter|on_use)");
  return {name, consequence, trig};
}

}  // namespace

WorldConfig load_world(const std::string& text) {
  WorldConfig w;
  w.walls.clear();
  std::vector<std::string> map_rows;
  std::map<char, LegendEntry> legend;
  std::map<char, std::vector<GridPos>> letter_cells;
  bool saw_map = false, saw_agent = false, saw_door = false;
  bool key_required_set = false;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool in_map = false;
  while (std::getline(in, raw)) {
    ++line_no;
    if (in_map) {
      std::string row = trim(raw);
      if (row == "endmap") {
        in_map = false;
        continue;
      }
      if (row.empty()) parse_fail(line_no, "blank line inside map block");
      map_rows.push_back(row);
      continue;
    }
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "map") {
      if (saw_map) parse_fail(line_no, "duplicate map block");
      saw_map = true;
      in_map = true;
    } else if (key == "item") {
      std::string body = trim(line.substr(4));
      char letter;
      LegendEntry e = parse_legend(line_no, body, letter);
      if (legend.count(letter)) parse_fail(line_no, std::string("duplicate legend letter '") + letter + "'");
      if (letter == '#' || letter == '.' || letter == 'A' || letter == 'K' || letter == 'D')
        parse_fail(line_no, std::string("reserved map character '") + letter + "' used as item letter");
      legend[letter] = e;
    } else if (key == "goal_reward" || key == "step_penalty") {
      double v;
      if (!(ls >> v)) parse_fail(line_no, key + " needs a number");
      (key == "goal_reward" ? w.goal_reward : w.step_penalty) = v;
    } else if (key == "max_steps") {
      if (!(ls >> w.max_steps)) parse_fail(line_no, "max_steps needs an integer");
    } else if (key == "key_required") {
      std::string v;
      ls >> v;
      if (v != "true" && v != "false") parse_fail(line_no, "key_required needs true|false");
      w.key_required = (v == "true");
      key_required_set = true;
    } else {
      parse_fail(line_no, "unknown directive '" + key + "'");
    }
  }
  if (in_map) throw WorldError("world parse error: map block not closed with endmap");
  if (!saw_map) throw WorldError("world parse error: missing map block");

  w.height = static_cast<int>(map_rows.size());
  w.width = static_cast<int>(map_rows[0].size());
  w.key_position.reset();
  for (int r = 0; r < w.height; ++r) {
    if (static_cast<int>(map_rows[r].size()) != w.width)
      throw WorldError("world parse error: map row " + std::to_string(r) +
                       " has width " + std::to_string(map_rows[r].size()) +
                       ", expected " + std::to_string(w.width));
    for (int c = 0; c < w.width; ++c) {
      GridPos p{r, c};
      char ch = map_rows[r][c];
      switch (ch) {
        case '#': w.walls.insert(p); break;
        case '.': break;
        case 'A':
          if (saw_agent) throw WorldError("world parse error: multiple agent cells");
          w.agent_start = p;
          saw_agent = true;
          break;
        case 'K':
          if (w.key_position) throw WorldError("world parse error: multiple key cells");
          w.key_position = p;
          break;
        case 'D':
          if (saw_door) throw WorldError("world parse error: multiple door cells");
          w.door_position = p;
          saw_door = true;
          break;
        default:
          if (!legend.count(ch))
            throw WorldError(std::string("world parse error: map letter '") + ch +
                             "' at " + pos_str(p) + " has no item legend");
          letter_cells[ch].push_back(p);
      }
    }
  }
  if (!saw_agent) throw WorldError("world parse error: no agent cell 'A'");
  if (!saw_door) throw WorldError("world parse error: no door cell 'D'");
  for (const auto& [letter, entry] : legend)
    if (!letter_cells.count(letter))
      throw WorldError(std::string("world parse error: legend letter '") + letter +
                       "' does not appear on the map");
  if (!key_required_set && !w.key_position) w.key_required = false;

  // Items in row-major order per letter; ids are letter + ordinal.
  for (const auto& [letter, cells] : letter_cells) {
    const LegendEntry& e = legend[letter];
    int k = 0;
    for (GridPos p : cells) {
      Item it;
      it.id = std::string(1, letter) + std::to_string(k++);
      it.position = p;
      it.name = e.name;
      it.consequence_text = e.consequence;
      it.trigger = e.trigger;
      w.items.push_back(it);
    }
  }
  std::sort(w.items.begin(), w.items.end(),
            [](const Item& a, const Item& b) { return a.id < b.id; });

  validate_world(w);
  return w;
}

WorldConfig load_world_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw WorldError("cannot open world file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_world(ss.str());
}

std::string serialize_world(const WorldConfig& w) {
  // Group items by (name, consequence, trigger) and assign each group a
  // letter, preferring the uppercased initial of the name.
  struct Group {
    LegendEntry entry;
    std::vector<GridPos> cells;
  };
  std::vector<std::pair<char, Group>> groups;
  auto find_group = [&](const Item& it) -> Group* {
    for (auto& [letter, g] : groups)
      if (g.entry.name == it.name && g.entry.consequence == it.consequence_text &&
          g.entry.trigger == it.trigger)
        return &g;
    return nullptr;
  };
  auto letter_taken = [&](char ch) {
    if (ch == '#' || ch == '.' || ch == 'A' || ch == 'K' || ch == 'D') return true;
    for (auto& [letter, g] : groups)
      if (letter == ch) return true;
    return false;
  };
  std::vector<Item> ordered = w.items;
  std::sort(ordered.begin(), ordered.end(), [](const Item& a, const Item& b) {
    return std::pair(a.position, a.id) < std::pair(b.position, b.id);
  });
  for (const Item& it : ordered) {
    if (Group* g = find_group(it)) {
      g->cells.push_back(it.position);
      continue;
    }
    char letter = 0;
    for (char c : it.name) {
      char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (std::isalpha(static_cast<unsigned char>(u)) && !letter_taken(u)) {
        letter = u;
        break;
      }
    }
    if (!letter)
      for (char u = 'B'; u <= 'Z' && !letter; ++u)
        if (!letter_taken(u)) letter = u;
    if (!letter) throw WorldError("too many distinct item kinds to serialize");
    groups.push_back({letter, {{it.name, it.consequence_text, it.trigger}, {it.position}}});
  }

  std::ostringstream out;
  out << "goal_reward " << w.goal_reward << "\n";
  out << "step_penalty " << w.step_penalty << "\n";
  out << "max_steps " << w.max_steps << "\n";
  out << "key_required " << (w.key_required ? "true" : "false") << "\n";
  out << "map\n";
  for (int r = 0; r < w.height; ++r) {
    for (int c = 0; c < w.width; ++c) {
      GridPos p{r, c};
      char ch = '.';
      if (w.is_wall(p)) ch = '#';
      else if (p == w.agent_start) ch = 'A';
      else if (w.key_position && p == *w.key_position) ch = 'K';
      else if (p == w.door_position) ch = 'D';
      else {
        for (auto& [letter, g] : groups)
          if (std::find(g.cells.begin(), g.cells.end(), p) != g.cells.end()) {
            ch = letter;
            break;
          }
      }
      out << ch;
    }
    out << "\n";
  }
  out << "endmap\n";
  std::sort(groups.begin(), groups.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [letter, g] : groups)
    out << "item " << letter << " " << g.entry.name << " \"" << g.entry.consequence
        << "\" " << trigger_name(g.entry.trigger) << "\n";
  return out.str();
}

std::pair<AgentState, Episode> reset(const WorldConfig& w) {
  Episode ep;
  ep.items = w.items;
  for (Item& it : ep.items) it.consumed = false;
  ep.key_available = w.key_position.has_value();
  ep.steps = 0;
  ep.finished = false;
  return {AgentState{w.agent_start, false}, std::move(ep)};
}

StepOutcome step(const WorldConfig& w, Episode& ep, const AgentState& state,
                 Action action) {
  if (ep.finished)
    throw WorldError("step called on a finished episode");

  StepOutcome out;
  AgentState next = state;

  if (action != Action::Use) {
    GridPos d = action_delta(action);
    GridPos target{state.position.row + d.row, state.position.col + d.col};
    if (w.in_bounds(target) && !w.is_wall(target)) next.position = target;
  } else {
    if (ep.key_available && w.key_position && state.position == *w.key_position) {
      next.has_key = true;
      ep.key_available = false;
    }
    if (Item* it = ep.unconsumed_item_at(state.position);
        it && it->trigger == TriggerMode::OnUse) {
      it->consumed = true;
      out.events.push_back({it->id, it->consequence_text});
    }
  }

  // OnEnter items fire on the cell occupied after the move resolves.
  if (Item* it = ep.unconsumed_item_at(next.position);
      it && it->trigger == TriggerMode::OnEnter) {
    it->consumed = true;
    out.events.push_back({it->id, it->consequence_text});
  }

  ep.steps += 1;
  if (next.position == w.door_position && (next.has_key || !w.key_required)) {
    out.terminated = true;
    out.env_reward = w.goal_reward + w.step_penalty;
  } else {
    out.env_reward = w.step_penalty;
    if (ep.steps >= w.max_steps) out.truncated = true;
  }
  ep.finished = out.terminated || out.truncated;
  out.next_state = next;
  return out;
}

std::map<Action, const Item*> neighbor_items(const WorldConfig& w,
                                             const Episode& ep,
                                             const AgentState& state) {
  std::map<Action, const Item*> result;
  for (Action a : kMovementActions) {
    GridPos d = action_delta(a);
    GridPos target{state.position.row + d.row, state.position.col + d.col};
    if (!w.in_bounds(target)) continue;
    const Item* it = ep.unconsumed_item_at(target);
    if (it && it->trigger == TriggerMode::OnEnter) result[a] = it;
  }
  return result;
}

}  // namespace gridjudge
