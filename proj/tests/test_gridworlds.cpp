#include <gtest/gtest.h>

#include <cmath>
#include <queue>
#include <set>

#include "lispr/exact.hpp"
#include "lispr/gridworld.hpp"

using namespace lispr;

namespace {

std::string data_file(const std::string &name) { return std::string(LISPR_DATA_DIR) + "/layouts/" + name; }

std::vector<std::string> rows_of(const std::string &text) {
  std::vector<std::string> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) rows.push_back(line);
  return rows;
}

bool open_char(char c) { return c != '#'; }

// 4-connected components of room cells ('.' and 'G'), doorways excluded
int count_rooms(const std::vector<std::string> &rows) {
  const int h = static_cast<int>(rows.size()), w = static_cast<int>(rows[0].size());
  std::vector<std::vector<bool>> seen(h, std::vector<bool>(w, false));
  int rooms = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (seen[r][c] || rows[r][c] == '#' || rows[r][c] == 'D') continue;
      ++rooms;
      std::queue<std::pair<int, int>> q;
      q.push({r, c});
      seen[r][c] = true;
      while (!q.empty()) {
        auto [y, x] = q.front();
        q.pop();
        const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = y + dy[k], nx = x + dx[k];
          if (ny < 0 || nx < 0 || ny >= h || nx >= w || seen[ny][nx]) continue;
          if (rows[ny][nx] == '#' || rows[ny][nx] == 'D') continue;
          seen[ny][nx] = true;
          q.push({ny, nx});
        }
      }
    }
  return rooms;
}

// shortest-path steps from each open cell to the goal
std::map<std::pair<int, int>, int> bfs_to_goal(const std::vector<std::string> &rows) {
  std::map<std::pair<int, int>, int> dist;
  std::queue<std::pair<int, int>> q;
  for (int r = 0; r < static_cast<int>(rows.size()); ++r)
    for (int c = 0; c < static_cast<int>(rows[r].size()); ++c)
      if (rows[r][c] == 'G') {
        dist[{r, c}] = 0;
        q.push({r, c});
      }
  while (!q.empty()) {
    auto [y, x] = q.front();
    q.pop();
    const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int ny = y + dy[k], nx = x + dx[k];
      if (!open_char(rows[ny][nx]) || dist.count({ny, nx})) continue;
      dist[{ny, nx}] = dist[{y, x}] + 1;
      q.push({ny, nx});
    }
  }
  return dist;
}

} // namespace

TEST(Layouts, ShippedFilesMatchEmbedded) {
  EXPECT_EQ(read_layout_file(data_file("multiroom_source.txt")), kMultiroomSourceLayout);
  EXPECT_EQ(read_layout_file(data_file("multiroom_target.txt")), kMultiroomTargetLayout);
  EXPECT_EQ(read_layout_file(data_file("boxworld_source.txt")), kBoxworldSourceLayout);
  EXPECT_EQ(read_layout_file(data_file("boxworld_target.txt")), kBoxworldTargetLayout);
}

TEST(Layouts, RejectsMalformed) {
  EXPECT_THROW(parse_layout("###\n#.#\n###\n", GridTask::Multiroom, GridVariant::Source), std::invalid_argument);
  EXPECT_THROW(parse_layout("####\n#G#\n####\n", GridTask::Multiroom, GridVariant::Source), std::invalid_argument);
  EXPECT_THROW(parse_layout("####\n#GX#\n####\n", GridTask::Multiroom, GridVariant::Source), std::invalid_argument);
}

TEST(Multiroom, RoomCounts) {
  EXPECT_EQ(count_rooms(rows_of(read_layout_file(data_file("multiroom_source.txt")))), 2);
  EXPECT_EQ(count_rooms(rows_of(read_layout_file(data_file("multiroom_target.txt")))), 4);
}

TEST(Multiroom, StateCountIsOpenCellCount) {
  for (auto [variant, file] : {std::pair{GridVariant::Source, "multiroom_source.txt"},
                               std::pair{GridVariant::Target, "multiroom_target.txt"}}) {
    std::size_t open = 0;
    for (const auto &row : rows_of(read_layout_file(data_file(file))))
      for (char c : row) open += open_char(c);
    EXPECT_EQ(build_multiroom(variant).meta.num_states(), open) << file;
  }
}

TEST(Multiroom, WallMovesStayPut) {
  const auto w = build_multiroom(GridVariant::Target);
  std::size_t blocked = 0;
  for (StateId s = 0; s < w.meta.num_states(); ++s) {
    if (w.mdp.is_terminal(s)) continue;
    for (ActionId a = 0; a < kGridActions; ++a)
      if (w.meta.spec().is_wall(move(w.meta.agent_cell(s), a))) {
        EXPECT_EQ(w.mdp.probability(s, a, s), 1.0);
        ++blocked;
      }
  }
  EXPECT_GT(blocked, 0u);
  EXPECT_TRUE(w.mdp.deterministic());
  EXPECT_TRUE(validate(w.mdp).empty());
}

TEST(Boxworld, PushOntoGoalPaysAndTerminates) {
  const auto w = build_boxworld(GridVariant::Source);
  const Cell goal = w.meta.spec().goal;
  const StateId s = w.meta.encode({goal.row, goal.col - 2}, {goal.row, goal.col - 1});
  Rng r(0);
  const auto out = step(r, w.mdp, s, Right);
  EXPECT_EQ(out.reward, 1.0);
  EXPECT_TRUE(out.done);
  EXPECT_EQ(w.meta.box_cell(out.next), goal);
}

TEST(Boxworld, PushIntoWallLeavesBoth) {
  const auto w = build_boxworld(GridVariant::Source);
  // box against the left wall, agent to its right pushing left
  const StateId s = w.meta.encode({3, 2}, {3, 1});
  EXPECT_EQ(w.mdp.probability(s, Left, s), 1.0);
  EXPECT_EQ(w.mdp.reward(s, Left, s), 0.0);
}

TEST(Boxworld, StateCountByEnumeration) {
  for (auto variant : {GridVariant::Source, GridVariant::Target}) {
    const auto w = build_boxworld(variant);
    const auto &spec = w.meta.spec();
    std::set<std::pair<std::pair<int, int>, std::pair<int, int>>> pairs;
    for (int ar = 0; ar < spec.height; ++ar)
      for (int ac = 0; ac < spec.width; ++ac)
        for (int br = 0; br < spec.height; ++br)
          for (int bc = 0; bc < spec.width; ++bc) {
            if (spec.is_wall({ar, ac}) || spec.is_wall({br, bc}) || (ar == br && ac == bc)) continue;
            pairs.insert({{ar, ac}, {br, bc}});
          }
    EXPECT_EQ(w.meta.num_states(), pairs.size());
  }
}

TEST(Boxworld, StartsAreSolvableAndNonTerminal) {
  const auto w = build_boxworld(GridVariant::Source);
  // forward search from each start over the deterministic transition graph
  std::size_t starts = 0;
  for (StateId s = 0; s < w.meta.num_states(); ++s) {
    if (w.mdp.initial()[s] == 0.0) continue;
    ++starts;
    ASSERT_FALSE(w.mdp.is_terminal(s));
    std::vector<bool> seen(w.meta.num_states(), false);
    std::queue<StateId> q;
    q.push(s);
    seen[s] = true;
    bool reached = false;
    while (!q.empty() && !reached) {
      const StateId x = q.front();
      q.pop();
      for (ActionId a = 0; a < kGridActions && !reached; ++a) {
        const StateId y = w.mdp.outcomes(x, a)[0].next;
        if (w.mdp.is_terminal(y)) reached = true;
        if (!seen[y]) {
          seen[y] = true;
          q.push(y);
        }
      }
    }
    EXPECT_TRUE(reached) << "start " << s;
  }
  EXPECT_GT(starts, 0u);
  // a box stuck in a non-goal corner is never a start
  EXPECT_EQ(w.mdp.initial()[w.meta.encode({2, 2}, {1, 1})], 0.0);
}

TEST(Mapping, GoalRoomIsIdentity) {
  const auto src = build_multiroom(GridVariant::Source);
  const auto tgt = build_multiroom(GridVariant::Target);
  for (StateId s = 0; s < tgt.meta.num_states(); ++s) {
    const Cell c = tgt.meta.agent_cell(s);
    if (c.row >= src.meta.spec().height - 1) continue;
    const auto image = map_target_to_source_state(src.meta, tgt.meta, s);
    ASSERT_TRUE(image);
    EXPECT_EQ(src.meta.agent_cell(*image), c);
  }
}

TEST(Mapping, EveryTargetStateLandsOnOpenSourceState) {
  for (auto task : {GridTask::Multiroom, GridTask::BoxWorld}) {
    const auto src = build_gridworld(task, GridVariant::Source);
    const auto tgt = build_gridworld(task, GridVariant::Target);
    for (StateId s = 0; s < tgt.meta.num_states(); ++s) {
      const auto image = map_target_to_source_state(src.meta, tgt.meta, s);
      ASSERT_TRUE(image) << "target state " << s;
      ASSERT_LT(*image, src.meta.num_states());
      EXPECT_TRUE(src.meta.spec().is_open(src.meta.agent_cell(*image)));
    }
  }
}

TEST(Mapping, BoxworldAlignsGoals) {
  const auto src = build_boxworld(GridVariant::Source);
  const auto tgt = build_boxworld(GridVariant::Target);
  const Cell gs = src.meta.spec().goal, gt = tgt.meta.spec().goal;
  const StateId s = tgt.meta.encode({gt.row + 1, gt.col - 2}, {gt.row, gt.col - 1});
  const auto image = map_target_to_source_state(src.meta, tgt.meta, s);
  ASSERT_TRUE(image);
  EXPECT_EQ(src.meta.box_cell(*image), (Cell{gs.row, gs.col - 1}));
  EXPECT_EQ(src.meta.agent_cell(*image), (Cell{gs.row + 1, gs.col - 2}));
}

TEST(Render, ZeroTableGivesZeroGrid) {
  const auto w = build_multiroom(GridVariant::Target);
  const auto grid = render_values(std::vector<double>(w.meta.num_states(), 0.0), w.meta);
  for (int r = 0; r < grid.height; ++r)
    for (int c = 0; c < grid.width; ++c) {
      if (w.meta.spec().is_wall({r, c})) EXPECT_TRUE(std::isnan(grid.at(r, c)));
      else EXPECT_EQ(grid.at(r, c), 0.0);
    }
}

TEST(Render, ExactSuccessOfOptimalPolicyIsDiscountedDistance) {
  const double gamma = 0.99;
  const auto w = build_multiroom(GridVariant::Source, gamma);
  const auto mu = value_iteration(w.mdp).policy;
  const auto g = compute_G_exact(w.mdp, mu);
  const auto grid = render_values(g.v, w.meta);
  const auto dist = bfs_to_goal(rows_of(std::string(kMultiroomSourceLayout)));
  std::size_t above = 0, below = 0;
  for (const auto &[cell, d] : dist) {
    const double expected = d == 0 ? 0.0 : std::pow(gamma, d - 1);
    EXPECT_NEAR(grid.at(cell.first, cell.second), expected, 1e-10);
    if (d > 0) (expected >= 0.9 ? above : below)++;
  }
  // a 0.9 threshold splits the map into both regions
  EXPECT_GT(above, 0u);
  EXPECT_GT(below, 0u);
}

TEST(Render, BoxworldReductions) {
  const auto w = build_boxworld(GridVariant::Source);
  std::vector<double> table(w.meta.num_states());
  for (StateId s = 0; s < table.size(); ++s) table[s] = static_cast<double>(s);
  const Cell box{3, 3};
  const auto fixed = render_values(table, w.meta, BoxReduce::FixedBox, box);
  EXPECT_TRUE(std::isnan(fixed.at(box.row, box.col)));
  EXPECT_EQ(fixed.at(1, 1), static_cast<double>(w.meta.encode({1, 1}, box)));
  const auto mx = render_values(table, w.meta);
  double best = -1;
  for (StateId s = 0; s < table.size(); ++s)
    if (w.meta.agent_cell(s) == Cell{1, 1}) best = std::max(best, table[s]);
  EXPECT_EQ(mx.at(1, 1), best);
}
