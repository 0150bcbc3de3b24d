#pragma once

#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lispr/mdp.hpp"

namespace lispr {

enum class GridTask { Multiroom, BoxWorld };
enum class GridVariant { Source, Target };

/// Grid actions, in id order.
enum GridAction : ActionId { Up = 0, Down = 1, Left = 2, Right = 3 };
inline constexpr std::size_t kGridActions = 4;

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell &) const = default;
};

inline Cell move(Cell c, ActionId a) {
  switch (a) {
  case Up: return {c.row - 1, c.col};
  case Down: return {c.row + 1, c.col};
  case Left: return {c.row, c.col - 1};
  default: return {c.row, c.col + 1};
  }
}

/// Parsed layout: '#' wall, '.' open, 'G' goal, 'D' doorway (open).
struct GridSpec {
  int width = 0;
  int height = 0;
  std::vector<char> cells; // row-major
  Cell goal;
  std::vector<Cell> doorways;
  GridVariant variant = GridVariant::Target;
  GridTask task = GridTask::Multiroom;

  bool in_bounds(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < height && c.col < width; }
  char at(Cell c) const { return cells[static_cast<std::size_t>(c.row * width + c.col)]; }
  bool is_wall(Cell c) const { return !in_bounds(c) || at(c) == '#'; }
  bool is_open(Cell c) const { return !is_wall(c); }
};

inline GridSpec parse_layout(std::string_view text, GridTask task, GridVariant variant) {
  GridSpec spec;
  spec.task = task;
  spec.variant = variant;
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.empty()) throw std::invalid_argument("layout: empty grid");
  spec.height = static_cast<int>(rows.size());
  spec.width = static_cast<int>(rows.front().size());
  int goals = 0;
  for (int r = 0; r < spec.height; ++r) {
    if (static_cast<int>(rows[r].size()) != spec.width)
      throw std::invalid_argument("layout: ragged row " + std::to_string(r));
    for (int c = 0; c < spec.width; ++c) {
      const char ch = rows[r][c];
      switch (ch) {
      case '#':
      case '.': break;
      case 'G':
        spec.goal = {r, c};
        ++goals;
        break;
      case 'D': spec.doorways.push_back({r, c}); break;
      default: throw std::invalid_argument(std::string("layout: unknown cell character '") + ch + "'");
      }
      spec.cells.push_back(ch);
    }
  }
  if (goals != 1) throw std::invalid_argument("layout: expected exactly one goal cell");
  return spec;
}

// Canonical layouts; identical copies ship under data/layouts/.
inline constexpr std::string_view kMultiroomSourceLayout = "#############\n"
                                                           "#.....#....G#\n"
                                                           "#.....#.....#\n"
                                                           "#.....D.....#\n"
                                                           "#.....#.....#\n"
                                                           "#.....#.....#\n"
                                                           "#############\n";

inline constexpr std::string_view kMultiroomTargetLayout = "#############\n"
                                                           "#.....#....G#\n"
                                                           "#.....#.....#\n"
                                                           "#.....D.....#\n"
                                                           "#.....#.....#\n"
                                                           "#.....#.....#\n"
                                                           "###D#####D###\n"
                                                           "#.....#.....#\n"
                                                           "#.....#.....#\n"
                                                           "#.....D.....#\n"
                                                           "#.....#.....#\n"
                                                           "#.....#.....#\n"
                                                           "#############\n";

inline constexpr std::string_view kBoxworldSourceLayout = "########\n"
                                                          "#.....G#\n"
                                                          "#......#\n"
                                                          "#......#\n"
                                                          "#......#\n"
                                                          "#......#\n"
                                                          "#......#\n"
                                                          "########\n";

inline constexpr std::string_view kBoxworldTargetLayout = "############\n"
                                                          "#.........G#\n"
                                                          "#..........#\n"
                                                          "#..........#\n"
                                                          "#..........#\n"
                                                          "#..........#\n"
                                                          "#..........#\n"
                                                          "#..........#\n"
                                                          "#..........#\n"
                                                          "#..........#\n"
                                                          "#..........#\n"
                                                          "############\n";

inline std::string_view canonical_layout(GridTask task, GridVariant variant) {
  if (task == GridTask::Multiroom)
    return variant == GridVariant::Source ? kMultiroomSourceLayout : kMultiroomTargetLayout;
  return variant == GridVariant::Source ? kBoxworldSourceLayout : kBoxworldTargetLayout;
}

inline std::string read_layout_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open layout file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/**
 * State-id <-> configuration encoding.
 *
 * Multiroom: one state per open cell. BoxWorld: one state per ordered pair
 * (agent cell, box cell) of distinct open cells.
 */
class GridMeta {
public:
  GridMeta() = default;
  explicit GridMeta(GridSpec spec) : spec_(std::move(spec)) {
    cell_index_.assign(static_cast<std::size_t>(spec_.width * spec_.height), -1);
    for (int r = 0; r < spec_.height; ++r)
      for (int c = 0; c < spec_.width; ++c)
        if (spec_.is_open({r, c})) {
          cell_index_[static_cast<std::size_t>(r * spec_.width + c)] = static_cast<int>(open_cells_.size());
          open_cells_.push_back({r, c});
        }
    const std::size_t n = open_cells_.size();
    if (spec_.task == GridTask::Multiroom) {
      num_states_ = n;
    } else {
      pair_to_state_.assign(n * n, kNone);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
          if (a == b) continue;
          pair_to_state_[a * n + b] = state_to_pair_.size();
          state_to_pair_.emplace_back(a, b);
        }
      num_states_ = state_to_pair_.size();
    }
  }

  const GridSpec &spec() const noexcept { return spec_; }
  GridTask task() const noexcept { return spec_.task; }
  std::size_t num_states() const noexcept { return num_states_; }
  std::size_t num_actions() const noexcept { return kGridActions; }
  const std::vector<Cell> &open_cells() const noexcept { return open_cells_; }

  /// Index of an open cell, or -1.
  int open_index(Cell c) const {
    if (!spec_.in_bounds(c)) return -1;
    return cell_index_[static_cast<std::size_t>(c.row * spec_.width + c.col)];
  }

  StateId encode(Cell agent) const {
    const int i = open_index(agent);
    if (spec_.task != GridTask::Multiroom || i < 0) throw std::invalid_argument("encode: illegal cell");
    return static_cast<StateId>(i);
  }

  StateId encode(Cell agent, Cell box) const {
    const int i = open_index(agent), j = open_index(box);
    if (spec_.task != GridTask::BoxWorld || i < 0 || j < 0 || i == j)
      throw std::invalid_argument("encode: illegal configuration");
    return pair_to_state_[static_cast<std::size_t>(i) * open_cells_.size() + static_cast<std::size_t>(j)];
  }

  std::optional<StateId> try_encode(Cell agent, Cell box) const {
    const int i = open_index(agent), j = open_index(box);
    if (i < 0 || j < 0 || i == j) return std::nullopt;
    return pair_to_state_[static_cast<std::size_t>(i) * open_cells_.size() + static_cast<std::size_t>(j)];
  }

  Cell agent_cell(StateId s) const {
    return spec_.task == GridTask::Multiroom ? open_cells_.at(s) : open_cells_[state_to_pair_.at(s).first];
  }

  Cell box_cell(StateId s) const {
    if (spec_.task != GridTask::BoxWorld) throw std::logic_error("box_cell: not a box world");
    return open_cells_[state_to_pair_.at(s).second];
  }

private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  GridSpec spec_;
  std::vector<int> cell_index_;
  std::vector<Cell> open_cells_;
  std::size_t num_states_ = 0;
  std::vector<std::size_t> pair_to_state_;
  std::vector<std::pair<std::size_t, std::size_t>> state_to_pair_;
};

struct GridWorld {
  TabularMdp mdp;
  GridMeta meta;
};

inline constexpr double kDefaultDiscount = 0.99;

/// States that can reach a terminal state (reverse breadth-first search).
inline std::vector<bool> can_reach_terminal(const TabularMdp &mdp) {
  const std::size_t n = mdp.num_states();
  std::vector<std::vector<StateId>> preds(n);
  for (StateId s = 0; s < n; ++s) {
    if (mdp.is_terminal(s)) continue;
    for (ActionId a = 0; a < mdp.num_actions(); ++a)
      for (const auto &o : mdp.outcomes(s, a))
        if (o.prob > 0.0 && o.next != s) preds[o.next].push_back(s);
  }
  std::vector<bool> seen(n, false);
  std::deque<StateId> queue;
  for (StateId s = 0; s < n; ++s)
    if (mdp.is_terminal(s)) {
      seen[s] = true;
      queue.push_back(s);
    }
  while (!queue.empty()) {
    const StateId s = queue.front();
    queue.pop_front();
    for (auto p : preds[s])
      if (!seen[p]) {
        seen[p] = true;
        queue.push_back(p);
      }
  }
  return seen;
}

inline GridWorld build_multiroom_from(GridSpec spec, double gamma = kDefaultDiscount) {
  spec.task = GridTask::Multiroom;
  GridMeta meta(std::move(spec));
  const auto &g = meta.spec();
  TabularMdp mdp(meta.num_states(), kGridActions, gamma);
  const StateId goal = meta.encode(g.goal);
  std::vector<StateId> starts;
  for (StateId s = 0; s < meta.num_states(); ++s) {
    if (s == goal) continue;
    starts.push_back(s);
    const Cell here = meta.agent_cell(s);
    for (ActionId a = 0; a < kGridActions; ++a) {
      Cell to = move(here, a);
      if (g.is_wall(to)) to = here;
      const StateId next = meta.encode(to);
      mdp.add_transition(s, a, next, 1.0, next == goal ? 1.0 : 0.0);
    }
  }
  mdp.set_terminal(goal);
  mdp.set_uniform_initial(starts);
  return {std::move(mdp), std::move(meta)};
}

/**
 * Box pushing: moving into the box pushes it one cell when the cell behind
 * it is open, otherwise nothing moves. Box on the goal is terminal with
 * reward +1. Starting states are the non-terminal configurations from which
 * the goal can still be reached.
 */
inline GridWorld build_boxworld_from(GridSpec spec, double gamma = kDefaultDiscount) {
  spec.task = GridTask::BoxWorld;
  GridMeta meta(std::move(spec));
  const auto &g = meta.spec();
  TabularMdp mdp(meta.num_states(), kGridActions, gamma);
  std::vector<StateId> terminals;
  for (StateId s = 0; s < meta.num_states(); ++s) {
    const Cell agent = meta.agent_cell(s);
    const Cell box = meta.box_cell(s);
    if (box == g.goal) {
      terminals.push_back(s);
      continue;
    }
    for (ActionId a = 0; a < kGridActions; ++a) {
      Cell agent_to = move(agent, a);
      Cell box_to = box;
      if (agent_to == box) {
        box_to = move(box, a);
        if (g.is_wall(box_to)) {
          agent_to = agent;
          box_to = box;
        }
      } else if (g.is_wall(agent_to)) {
        agent_to = agent;
      }
      const StateId next = meta.encode(agent_to, box_to);
      mdp.add_transition(s, a, next, 1.0, box_to == g.goal && !(box == g.goal) ? 1.0 : 0.0);
    }
  }
  for (auto t : terminals) mdp.set_terminal(t);
  const auto solvable = can_reach_terminal(mdp);
  std::vector<StateId> starts;
  for (StateId s = 0; s < meta.num_states(); ++s)
    if (!mdp.is_terminal(s) && solvable[s]) starts.push_back(s);
  mdp.set_uniform_initial(starts);
  return {std::move(mdp), std::move(meta)};
}

inline GridWorld build_multiroom(GridVariant variant, double gamma = kDefaultDiscount) {
  return build_multiroom_from(parse_layout(canonical_layout(GridTask::Multiroom, variant), GridTask::Multiroom, variant),
                              gamma);
}

inline GridWorld build_boxworld(GridVariant variant, double gamma = kDefaultDiscount) {
  return build_boxworld_from(parse_layout(canonical_layout(GridTask::BoxWorld, variant), GridTask::BoxWorld, variant),
                             gamma);
}

inline GridWorld build_gridworld(GridTask task, GridVariant variant, double gamma = kDefaultDiscount) {
  return task == GridTask::Multiroom ? build_multiroom(variant, gamma) : build_boxworld(variant, gamma);
}

/// Nearest open cell by Manhattan distance; ties go to the first cell in row-major order.
inline Cell nearest_open_cell(const GridMeta &meta, Cell c, std::optional<Cell> exclude = std::nullopt) {
  Cell best{-1, -1};
  int best_d = std::numeric_limits<int>::max();
  for (const auto &o : meta.open_cells()) {
    if (exclude && o == *exclude) continue;
    const int d = std::abs(o.row - c.row) + std::abs(o.col - c.col);
    if (d < best_d) {
      best_d = d;
      best = o;
    }
  }
  return best;
}

/// Folds a target-frame coordinate on one axis into a smaller source frame.
inline int fold_axis(int x, int source_extent, int target_extent) {
  return x >= source_extent ? x - (target_extent - source_extent) : x;
}

/**
 * Carries a target state into the source frame.
 *
 * Multiroom: rooms beyond the source extent fold back onto the source rooms
 * with the same relative coordinate; wall images clamp to the nearest open
 * cell. BoxWorld: agent and box translate so the goals coincide, then the
 * box clamps to the nearest open cell and the agent to the nearest open cell
 * other than the box.
 */
inline std::optional<StateId> map_target_to_source_state(const GridMeta &meta_src, const GridMeta &meta_tgt,
                                                         StateId s_tgt) {
  if (meta_src.task() != meta_tgt.task()) throw std::invalid_argument("map_target_to_source_state: task mismatch");
  const auto &src = meta_src.spec();
  const auto &tgt = meta_tgt.spec();
  if (meta_src.task() == GridTask::Multiroom) {
    const Cell c = meta_tgt.agent_cell(s_tgt);
    Cell image{fold_axis(c.row, src.height, tgt.height), fold_axis(c.col, src.width, tgt.width)};
    if (!src.is_open(image)) image = nearest_open_cell(meta_src, image);
    if (image.row < 0) return std::nullopt;
    return meta_src.encode(image);
  }
  const int dr = src.goal.row - tgt.goal.row;
  const int dc = src.goal.col - tgt.goal.col;
  const Cell a = meta_tgt.agent_cell(s_tgt);
  const Cell b = meta_tgt.box_cell(s_tgt);
  Cell box{b.row + dr, b.col + dc};
  if (!src.is_open(box)) box = nearest_open_cell(meta_src, box);
  if (box.row < 0) return std::nullopt;
  Cell agent{a.row + dr, a.col + dc};
  if (!src.is_open(agent) || agent == box) agent = nearest_open_cell(meta_src, agent, box);
  if (agent.row < 0) return std::nullopt;
  return meta_src.try_encode(agent, box);
}

enum class BoxReduce { Max, FixedBox };

/// Row-major width x height grid; walls hold NaN.
struct ValueGrid {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  double at(int r, int c) const { return values[static_cast<std::size_t>(r * width + c)]; }
};

inline ValueGrid render_values(const std::vector<double> &table, const GridMeta &meta,
                               BoxReduce reduce = BoxReduce::Max, std::optional<Cell> fixed_box = std::nullopt) {
  if (table.size() != meta.num_states()) throw std::invalid_argument("render_values: table length mismatch");
  const auto &g = meta.spec();
  ValueGrid grid{g.width, g.height,
                 std::vector<double>(static_cast<std::size_t>(g.width * g.height),
                                     std::numeric_limits<double>::quiet_NaN())};
  auto cell_ref = [&](Cell c) -> double & { return grid.values[static_cast<std::size_t>(c.row * g.width + c.col)]; };
  if (meta.task() == GridTask::Multiroom) {
    for (StateId s = 0; s < meta.num_states(); ++s) cell_ref(meta.agent_cell(s)) = table[s];
    return grid;
  }
  if (reduce == BoxReduce::FixedBox) {
    if (!fixed_box || !g.is_open(*fixed_box)) throw std::invalid_argument("render_values: fixed box cell required");
    for (const auto &c : meta.open_cells()) {
      if (c == *fixed_box) continue;
      cell_ref(c) = table[meta.encode(c, *fixed_box)];
    }
    return grid;
  }
  for (StateId s = 0; s < meta.num_states(); ++s) {
    double &v = cell_ref(meta.agent_cell(s));
    if (std::isnan(v) || table[s] > v) v = table[s];
  }
  return grid;
}

} // namespace lispr
