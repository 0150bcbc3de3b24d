#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "lispr/exact.hpp"
#include "lispr/gridworld.hpp"
#include "lispr/policy.hpp"
#include "lispr/training.hpp"

namespace lispr {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// How the source policy of a LISPR run is obtained.
struct SourceSpec {
  /// "train": Q(lambda) on the source variant; "optimal": value iteration on it; "file": a q_learner.csv.
  std::string kind = "train";
  std::string path;
  std::size_t max_steps = 200000;
  double alpha = 0.5;
  double lambda = 0.6;
  double epsilon_initial = 1.0;
  double epsilon_final = 0.1;
};

struct RunConfig {
  GridTask env = GridTask::Multiroom;
  GridVariant variant = GridVariant::Target;
  std::string layout;
  std::string source_layout;
  double gamma = kDefaultDiscount;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  TrainConfig train;
  SourceSpec source;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------------------
// JSON config

namespace detail {

inline void reject_unknown(const json &j, const std::set<std::string> &allowed, const std::string &where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const json &j, const char *key, T &out, const std::string &where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception &e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_count(const json &j, const char *key, std::size_t &out, const std::string &where) {
  if (!j.contains(key)) return;
  const auto &v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  out = v.get<std::size_t>();
}

inline std::string env_name(GridTask t) { return t == GridTask::Multiroom ? "multiroom" : "boxworld"; }
inline std::string variant_name(GridVariant v) { return v == GridVariant::Source ? "source" : "target"; }
inline std::string relabel_name(RelabelMode m) {
  return m == RelabelMode::Definition ? "definition" : "algorithm-literal";
}

} // namespace detail

inline GridTask env_from_string(const std::string &s) {
  if (s == "multiroom") return GridTask::Multiroom;
  if (s == "boxworld") return GridTask::BoxWorld;
  throw ConfigError("unknown env: " + s);
}

inline GridVariant variant_from_string(const std::string &s) {
  if (s == "source") return GridVariant::Source;
  if (s == "target") return GridVariant::Target;
  throw ConfigError("unknown variant: " + s);
}

inline RunConfig parse_run_config(const json &j) {
  static const std::set<std::string> keys{
      "env",          "variant",         "layout",        "source_layout", "algorithm",    "proxy",
      "relabel",      "alpha",           "lambda",        "epsilon_initial", "epsilon_final", "epsilon_anneal_steps",
      "main_epsilon", "g_alpha",         "v_alpha",       "gamma",         "tolerance",    "max_steps",
      "eval_every",   "eval_episodes",   "repeats",       "episode_cap",   "warmup_primal_steps", "threshold",
      "seed",         "source"};
  detail::reject_unknown(j, keys, "config");
  RunConfig c;
  auto &t = c.train;
  const std::string w = "config";
  try {
    std::string s;
    if (j.contains("env")) c.env = env_from_string(j.at("env").get<std::string>());
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("algorithm")) t.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
    if (j.contains("proxy")) t.proxy = proxy_kind_from_string(j.at("proxy").get<std::string>());
    if (j.contains("relabel")) {
      s = j.at("relabel").get<std::string>();
      if (s == "definition") t.relabel = RelabelMode::Definition;
      else if (s == "algorithm-literal") t.relabel = RelabelMode::AlgorithmLiteral;
      else throw ConfigError("unknown relabel mode: " + s);
    }
  } catch (const json::exception &e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  detail::read(j, "layout", c.layout, w);
  detail::read(j, "source_layout", c.source_layout, w);
  detail::read(j, "alpha", t.alpha, w);
  detail::read(j, "lambda", t.lambda, w);
  detail::read(j, "epsilon_initial", t.epsilon_initial, w);
  detail::read(j, "epsilon_final", t.epsilon_final, w);
  detail::read_count(j, "epsilon_anneal_steps", t.epsilon_anneal_steps, w);
  detail::read(j, "main_epsilon", t.main_epsilon, w);
  detail::read(j, "g_alpha", t.g_alpha, w);
  detail::read(j, "v_alpha", t.v_alpha, w);
  detail::read(j, "gamma", c.gamma, w);
  detail::read(j, "tolerance", t.threshold.tolerance, w);
  detail::read_count(j, "max_steps", t.max_steps, w);
  detail::read_count(j, "eval_every", t.eval_every, w);
  detail::read_count(j, "eval_episodes", t.eval_episodes, w);
  detail::read_count(j, "repeats", c.repeats, w);
  detail::read_count(j, "episode_cap", t.episode_cap, w);
  detail::read_count(j, "warmup_primal_steps", t.warmup_primal_steps, w);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0))
      throw ConfigError("config.seed: expected a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("threshold")) {
    const auto &th = j.at("threshold");
    detail::reject_unknown(th, {"kind", "value"}, "config.threshold");
    std::string kind = "constant";
    detail::read(th, "kind", kind, "config.threshold");
    try {
      t.threshold.kind = threshold_kind_from_string(kind);
    } catch (const std::invalid_argument &e) {
      throw ConfigError(e.what());
    }
    detail::read(th, "value", t.threshold.constant, "config.threshold");
    if (t.threshold.kind != ThresholdKind::Constant && th.contains("value"))
      throw ConfigError("config.threshold.value: only constant thresholds take a value");
  }
  if (j.contains("source")) {
    const auto &src = j.at("source");
    const std::string ws = "config.source";
    detail::reject_unknown(src, {"kind", "path", "max_steps", "alpha", "lambda", "epsilon_initial", "epsilon_final"},
                           ws);
    detail::read(src, "kind", c.source.kind, ws);
    detail::read(src, "path", c.source.path, ws);
    detail::read_count(src, "max_steps", c.source.max_steps, ws);
    detail::read(src, "alpha", c.source.alpha, ws);
    detail::read(src, "lambda", c.source.lambda, ws);
    detail::read(src, "epsilon_initial", c.source.epsilon_initial, ws);
    detail::read(src, "epsilon_final", c.source.epsilon_final, ws);
    if (c.source.kind != "train" && c.source.kind != "optimal" && c.source.kind != "file")
      throw ConfigError("config.source.kind: expected train, optimal or file");
    if (c.source.kind == "file" && c.source.path.empty()) throw ConfigError("config.source.path: required for file");
  }
  if (!(c.gamma >= 0.0 && c.gamma < 1.0)) throw ConfigError("config.gamma: expected a value in [0,1)");
  if (c.repeats == 0) throw ConfigError("config.repeats: must be positive");
  for (double x : {c.source.alpha, c.source.lambda, c.source.epsilon_initial, c.source.epsilon_final})
    if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("config.source: rates must lie in [0,1]");
  try {
    validate(t);
  } catch (const std::invalid_argument &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline json to_json(const RunConfig &c) {
  const auto &t = c.train;
  json th{{"kind", to_string(t.threshold.kind)}};
  if (t.threshold.kind == ThresholdKind::Constant) th["value"] = t.threshold.constant;
  return json{{"env", detail::env_name(c.env)},
              {"variant", detail::variant_name(c.variant)},
              {"layout", c.layout},
              {"source_layout", c.source_layout},
              {"algorithm", to_string(t.algorithm)},
              {"proxy", to_string(t.proxy)},
              {"relabel", detail::relabel_name(t.relabel)},
              {"alpha", t.alpha},
              {"lambda", t.lambda},
              {"epsilon_initial", t.epsilon_initial},
              {"epsilon_final", t.epsilon_final},
              {"epsilon_anneal_steps", t.epsilon_anneal_steps},
              {"main_epsilon", t.main_epsilon},
              {"g_alpha", t.g_alpha},
              {"v_alpha", t.v_alpha},
              {"gamma", c.gamma},
              {"tolerance", t.threshold.tolerance},
              {"max_steps", t.max_steps},
              {"eval_every", t.eval_every},
              {"eval_episodes", t.eval_episodes},
              {"repeats", c.repeats},
              {"episode_cap", t.episode_cap},
              {"warmup_primal_steps", t.warmup_primal_steps},
              {"threshold", th},
              {"seed", c.seed},
              {"source",
               {{"kind", c.source.kind},
                {"path", c.source.path},
                {"max_steps", c.source.max_steps},
                {"alpha", c.source.alpha},
                {"lambda", c.source.lambda},
                {"epsilon_initial", c.source.epsilon_initial},
                {"epsilon_final", c.source.epsilon_final}}}};
}

inline std::string read_text_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Relative layout and source-table paths are taken relative to base_dir.
inline void resolve_paths(RunConfig &c, const fs::path &base_dir) {
  if (base_dir.empty()) return;
  for (std::string *p : {&c.layout, &c.source_layout, &c.source.path})
    if (!p->empty() && fs::path(*p).is_relative()) *p = fs::absolute(base_dir / *p).lexically_normal().string();
}

inline RunConfig load_run_config(const fs::path &path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto c = parse_run_config(j);
  resolve_paths(c, path.parent_path());
  return c;
}

// ----------------------------------------------------------------------------
// Hashing and tables

/// Git blob object id (SHA-1 of "blob <len>\0<content>").
inline std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX *ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("git_blob_sha1: EVP_MD_CTX_new failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("git_blob_sha1: digest failed");
  static const char *hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

/// Shortest round-trip decimal form used in every CSV.
inline std::string fmt_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class Tag>
std::string table_csv(const ActionTable<Tag> &t) {
  std::string out = "state,action,value\n";
  for (StateId s = 0; s < t.num_states(); ++s)
    for (ActionId a = 0; a < t.num_actions(); ++a)
      out += std::to_string(s) + "," + std::to_string(a) + "," + fmt_double(t(s, a)) + "\n";
  return out;
}

/// State tables leave the action column empty.
inline std::string table_csv(const VTable &v) {
  std::string out = "state,action,value\n";
  for (StateId s = 0; s < v.num_states(); ++s) out += std::to_string(s) + ",," + fmt_double(v(s)) + "\n";
  return out;
}

inline std::string policy_csv(const Policy &p) {
  std::string out = "state,action,value\n";
  for (StateId s = 0; s < p.num_states(); ++s)
    for (ActionId a = 0; a < p.num_actions(); ++a)
      out += std::to_string(s) + "," + std::to_string(a) + "," + fmt_double(p.prob(s, a)) + "\n";
  return out;
}

struct TableRow {
  StateId state;
  std::optional<ActionId> action;
  double value;
};

inline std::vector<TableRow> parse_table_csv(const std::string &text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "state,action,value")
    throw std::runtime_error("table csv: expected header state,action,value");
  std::vector<TableRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw std::runtime_error("table csv: malformed line " + std::to_string(lineno));
    try {
      TableRow r;
      r.state = std::stoull(line.substr(0, c1));
      const auto a = line.substr(c1 + 1, c2 - c1 - 1);
      if (!a.empty()) r.action = std::stoull(a);
      r.value = std::stod(line.substr(c2 + 1));
      rows.push_back(r);
    } catch (const std::exception &) {
      throw std::runtime_error("table csv: malformed line " + std::to_string(lineno));
    }
  }
  return rows;
}

template <class Table>
Table read_action_table(const fs::path &path) {
  const auto rows = parse_table_csv(read_text_file(path));
  std::size_t ns = 0, na = 0;
  for (const auto &r : rows) {
    if (!r.action) throw std::runtime_error(path.string() + ": action column required");
    ns = std::max(ns, r.state + 1);
    na = std::max(na, *r.action + 1);
  }
  Table t(ns, na);
  for (const auto &r : rows) t(r.state, *r.action) = r.value;
  return t;
}

inline VTable read_state_table(const fs::path &path) {
  const auto rows = parse_table_csv(read_text_file(path));
  std::size_t ns = 0;
  for (const auto &r : rows) ns = std::max(ns, r.state + 1);
  VTable v(ns);
  for (const auto &r : rows) v(r.state) = r.value;
  return v;
}

inline Policy read_policy(const fs::path &path) {
  const auto rows = parse_table_csv(read_text_file(path));
  std::size_t ns = 0, na = 0;
  for (const auto &r : rows) {
    if (!r.action) throw std::runtime_error(path.string() + ": action column required");
    ns = std::max(ns, r.state + 1);
    na = std::max(na, *r.action + 1);
  }
  std::vector<double> probs(ns * na, 0.0);
  for (const auto &r : rows) probs[r.state * na + *r.action] = r.value;
  Policy p(ns, na);
  for (StateId s = 0; s < ns; ++s) p.set_distribution(s, std::span<const double>(probs.data() + s * na, na));
  return p;
}

inline void write_text_file(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ----------------------------------------------------------------------------
// Environments and source policies

struct Environment {
  GridWorld world;
  std::string layout_text;
};

inline std::string layout_text(GridTask task, GridVariant variant, const std::string &path) {
  return path.empty() ? std::string(canonical_layout(task, variant)) : read_layout_file(path);
}

inline Environment make_environment(GridTask task, GridVariant variant, const std::string &layout_path, double gamma) {
  Environment env;
  env.layout_text = layout_text(task, variant, layout_path);
  auto spec = parse_layout(env.layout_text, task, variant);
  env.world = task == GridTask::Multiroom ? build_multiroom_from(std::move(spec), gamma)
                                          : build_boxworld_from(std::move(spec), gamma);
  return env;
}

/// mu(s_tgt) = lowest-id argmax of q_src at the source image of s_tgt.
inline SourcePolicy compose_source_policy(const QTable &q_src, const GridMeta &src, const GridMeta &tgt) {
  if (q_src.num_states() != src.num_states()) throw std::invalid_argument("source Q does not match source layout");
  std::vector<ActionId> actions(tgt.num_states(), 0);
  for (StateId s = 0; s < tgt.num_states(); ++s) {
    const auto image = map_target_to_source_state(src, tgt, s);
    if (!image) continue;
    const auto row = q_src.row(*image);
    actions[s] = static_cast<ActionId>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return Policy::deterministic(tgt.num_actions(), actions);
}

inline constexpr std::uint64_t kSourceStream = 0x736f75726365ULL;

struct SourceArtifacts {
  QTable q;
  std::vector<CurvePoint> curve;
  std::uint64_t seed = 0;
};

/// Source-task Q table for a run: trained, solved exactly, or read from disk.
inline SourceArtifacts source_q(const RunConfig &c, const Environment &src_env) {
  SourceArtifacts out;
  const auto &mdp = src_env.world.mdp;
  if (c.source.kind == "file") {
    out.q = read_action_table<QTable>(c.source.path);
    return out;
  }
  if (c.source.kind == "optimal") {
    const auto sol = value_iteration(mdp);
    out.q = QTable(mdp.num_states(), mdp.num_actions());
    out.q.values() = sol.values.q;
    return out;
  }
  TrainConfig tc;
  tc.algorithm = Algorithm::BaselineQ;
  tc.alpha = c.source.alpha;
  tc.lambda = c.source.lambda;
  tc.epsilon_initial = c.source.epsilon_initial;
  tc.epsilon_final = c.source.epsilon_final;
  tc.max_steps = c.source.max_steps;
  tc.eval_every = c.train.eval_every;
  tc.eval_episodes = c.train.eval_episodes;
  tc.episode_cap = c.train.episode_cap;
  out.seed = derive_seed(c.seed, kSourceStream);
  auto r = train(mdp, nullptr, tc, out.seed);
  out.q = std::move(r.q);
  out.curve = std::move(r.curve);
  return out;
}

// ----------------------------------------------------------------------------
// Runs

struct CurveRow {
  std::size_t step = 0;
  double mean_return = 0.0;
  double ci95_lo = 0.0;
  double ci95_hi = 0.0;
  double success_rate = 0.0;
};

/// Mean and normal-approximation 95% interval across repeats.
inline std::vector<CurveRow> aggregate_curves(const std::vector<std::vector<CurvePoint>> &runs) {
  if (runs.empty()) return {};
  std::vector<CurveRow> rows;
  const std::size_t n = runs.size();
  for (std::size_t i = 0; i < runs[0].size(); ++i) {
    CurveRow row;
    row.step = runs[0][i].step;
    double sum = 0.0, succ = 0.0;
    for (const auto &r : runs) {
      if (r.size() != runs[0].size() || r[i].step != row.step) throw std::logic_error("aggregate: mismatched curves");
      sum += r[i].mean_return;
      succ += r[i].success_rate;
    }
    row.mean_return = sum / static_cast<double>(n);
    row.success_rate = succ / static_cast<double>(n);
    double half = 0.0;
    if (n > 1) {
      double ss = 0.0;
      for (const auto &r : runs) ss += (r[i].mean_return - row.mean_return) * (r[i].mean_return - row.mean_return);
      half = 1.96 * std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
    }
    row.ci95_lo = row.mean_return - half;
    row.ci95_hi = row.mean_return + half;
    rows.push_back(row);
  }
  return rows;
}

inline std::string curve_csv(const std::vector<CurveRow> &rows) {
  std::string out = "step,mean_return,ci95_lo,ci95_hi,success_rate\n";
  for (const auto &r : rows)
    out += std::to_string(r.step) + "," + fmt_double(r.mean_return) + "," + fmt_double(r.ci95_lo) + "," +
           fmt_double(r.ci95_hi) + "," + fmt_double(r.success_rate) + "\n";
  return out;
}

inline std::vector<CurveRow> parse_curve_csv(const std::string &text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "step,mean_return,ci95_lo,ci95_hi,success_rate")
    throw std::runtime_error("curve csv: unexpected header");
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[5];
    for (auto &x : f)
      if (!std::getline(ls, x, ',')) throw std::runtime_error("curve csv: malformed line: " + line);
    try {
      rows.push_back({std::stoull(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
    } catch (const std::exception &) {
      throw std::runtime_error("curve csv: malformed line: " + line);
    }
  }
  return rows;
}

struct RunOutput {
  RunConfig config;
  std::vector<CurveRow> curve;
  std::vector<std::vector<CurvePoint>> repeat_curves;
  std::vector<std::uint64_t> repeat_seeds;
  /// Tables of the first repeat.
  QTable q;
  GTable g;
  VTable v;
  std::optional<SourcePolicy> mu;
  std::optional<SourceArtifacts> source;
  std::string layout_text;
  std::string source_layout_text;
};

inline std::uint64_t repeat_seed(std::uint64_t seed, std::size_t repeat) { return derive_seed(seed, 0x1000 + repeat); }

inline RunOutput run_experiment(const RunConfig &c) {
  RunOutput out;
  out.config = c;
  const auto env = make_environment(c.env, c.variant, c.layout, c.gamma);
  out.layout_text = env.layout_text;
  if (c.train.algorithm != Algorithm::BaselineQ) {
    const auto src = make_environment(c.env, GridVariant::Source, c.source_layout, c.gamma);
    out.source_layout_text = src.layout_text;
    out.source = source_q(c, src);
    out.mu = compose_source_policy(out.source->q, src.world.meta, env.world.meta);
  }
  for (std::size_t r = 0; r < c.repeats; ++r) {
    const auto seed = repeat_seed(c.seed, r);
    out.repeat_seeds.push_back(seed);
    auto res = train(env.world.mdp, out.mu ? &*out.mu : nullptr, c.train, seed);
    out.repeat_curves.push_back(std::move(res.curve));
    if (r == 0) {
      out.q = std::move(res.q);
      out.g = std::move(res.g);
      out.v = std::move(res.v);
    }
  }
  out.curve = aggregate_curves(out.repeat_curves);
  return out;
}

inline json run_meta(const RunOutput &o) {
  json m;
  m["config"] = to_json(o.config);
  m["seed"] = o.config.seed;
  m["repeat_seeds"] = o.repeat_seeds;
  m["step_unit"] = "environment steps";
  m["evaluation"] = "greedy main policy, undiscounted return, fresh derived seeds";
  json fixtures;
  fixtures["layout"] = git_blob_sha1(o.layout_text);
  if (!o.source_layout_text.empty()) fixtures["source_layout"] = git_blob_sha1(o.source_layout_text);
  m["fixture_hashes"] = fixtures;
  if (o.source) {
    m["source_seed"] = o.source->seed;
    if (!o.source->curve.empty()) m["source_final_return"] = o.source->curve.back().mean_return;
  }
  return m;
}

/// Writes curve.csv, the tables, the per-repeat curves and meta.json into dir.
inline void write_run(const RunOutput &o, const fs::path &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
  write_text_file(dir / "curve.csv", curve_csv(o.curve));
  write_text_file(dir / "q_learner.csv", table_csv(o.q));
  write_text_file(dir / "g_table.csv", table_csv(o.g));
  write_text_file(dir / "v_behavior.csv", table_csv(o.v));
  std::string per = "repeat,step,mean_return,success_rate\n";
  for (std::size_t r = 0; r < o.repeat_curves.size(); ++r)
    for (const auto &p : o.repeat_curves[r])
      per += std::to_string(r) + "," + std::to_string(p.step) + "," + fmt_double(p.mean_return) + "," +
             fmt_double(p.success_rate) + "\n";
  write_text_file(dir / "repeat_curves.csv", per);
  if (o.mu) write_text_file(dir / "mu_policy.csv", policy_csv(*o.mu));
  write_text_file(dir / "meta.json", run_meta(o).dump(2) + "\n");
}

// ----------------------------------------------------------------------------
// Curve statistics and comparison

/// Trapezoidal area under mean_return over steps.
inline double curve_auc(const std::vector<CurveRow> &rows) {
  double area = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    area += 0.5 * (rows[i].mean_return + rows[i - 1].mean_return) *
            static_cast<double>(rows[i].step - rows[i - 1].step);
  return area;
}

template <class Row>
std::optional<std::size_t> first_step_reaching(const std::vector<Row> &rows, double threshold) {
  for (const auto &r : rows)
    if (r.mean_return >= threshold) return r.step;
  return std::nullopt;
}

struct CompareSummary {
  std::vector<std::size_t> steps;
  std::vector<double> difference; // B - A
  double auc_a = 0.0, auc_b = 0.0;
  double auc_ratio = 0.0;          // AUC(B) / AUC(A)
  std::optional<std::size_t> first_a, first_b;
};

inline CompareSummary compare_curves(const std::vector<CurveRow> &a, const std::vector<CurveRow> &b,
                                     double threshold = 0.9) {
  if (a.size() != b.size()) throw std::invalid_argument("compare: curves have different evaluation grids");
  CompareSummary s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step) throw std::invalid_argument("compare: curves have different evaluation grids");
    s.steps.push_back(a[i].step);
    s.difference.push_back(b[i].mean_return - a[i].mean_return);
  }
  s.auc_a = curve_auc(a);
  s.auc_b = curve_auc(b);
  s.auc_ratio = s.auc_a == s.auc_b ? 1.0 : s.auc_b / s.auc_a;
  s.first_a = first_step_reaching(a, threshold);
  s.first_b = first_step_reaching(b, threshold);
  return s;
}

// ----------------------------------------------------------------------------
// Sweeps

struct SweepEntry {
  std::string name;
  json params;
  double final_return = 0.0;
  double auc = 0.0;
};

inline void set_dotted(json &j, const std::string &key, const json &value) {
  json *cur = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

/// Cartesian product of grid lists applied to the base config; keys may be dotted ("threshold.value").
inline std::vector<std::pair<json, json>> expand_sweep(const json &sweep) {
  detail::reject_unknown(sweep, {"base", "grid"}, "sweep");
  if (!sweep.contains("grid") || !sweep.at("grid").is_object() || sweep.at("grid").empty())
    throw ConfigError("sweep: empty grid");
  const json base = sweep.value("base", json::object());
  std::vector<std::string> keys;
  std::vector<std::vector<json>> values;
  for (auto it = sweep.at("grid").begin(); it != sweep.at("grid").end(); ++it) {
    if (!it->is_array() || it->empty()) throw ConfigError("sweep.grid." + it.key() + ": expected a non-empty list");
    keys.push_back(it.key());
    values.emplace_back(it->begin(), it->end());
  }
  std::vector<std::pair<json, json>> points;
  std::vector<std::size_t> idx(keys.size(), 0);
  for (;;) {
    json cfg = base, params = json::object();
    for (std::size_t k = 0; k < keys.size(); ++k) {
      set_dotted(cfg, keys[k], values[k][idx[k]]);
      params[keys[k]] = values[k][idx[k]];
    }
    points.emplace_back(std::move(cfg), std::move(params));
    std::size_t k = keys.size();
    while (k > 0) {
      --k;
      if (++idx[k] < values[k].size()) break;
      idx[k] = 0;
      if (k == 0) return points;
    }
    if (keys.empty()) return points;
  }
}

/// Best first: higher final mean return, then larger area under the curve.
inline void rank_sweep(std::vector<SweepEntry> &entries) {
  std::stable_sort(entries.begin(), entries.end(), [](const SweepEntry &a, const SweepEntry &b) {
    if (a.final_return != b.final_return) return a.final_return > b.final_return;
    return a.auc > b.auc;
  });
}

inline std::vector<SweepEntry> run_sweep(const json &sweep, const fs::path &out_dir, const fs::path &base_dir = {}) {
  const auto points = expand_sweep(sweep);
  std::vector<RunConfig> configs;
  for (const auto &p : points) {
    configs.push_back(parse_run_config(p.first));
    resolve_paths(configs.back(), base_dir);
  }
  std::vector<SweepEntry> entries;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    const auto out = run_experiment(configs[i]);
    write_run(out, out_dir / name);
    entries.push_back({name, points[i].second, out.curve.empty() ? 0.0 : out.curve.back().mean_return,
                       curve_auc(out.curve)});
  }
  rank_sweep(entries);
  std::string csv = "rank,run,params,final_return,auc\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::string params = entries[i].params.dump();
    std::string quoted = "\"";
    for (char ch : params) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    quoted += "\"";
    csv += std::to_string(i + 1) + "," + entries[i].name + "," + quoted + "," + fmt_double(entries[i].final_return) +
           "," + fmt_double(entries[i].auc) + "\n";
  }
  write_text_file(out_dir / "summary.csv", csv);
  return entries;
}

// ----------------------------------------------------------------------------
// Heatmaps

enum class HeatmapTable { G, V, QMax };

inline HeatmapTable heatmap_table_from_string(const std::string &s) {
  if (s == "g") return HeatmapTable::G;
  if (s == "v") return HeatmapTable::V;
  if (s == "qmax") return HeatmapTable::QMax;
  throw std::invalid_argument("unknown heatmap table: " + s);
}

struct Heatmap {
  ValueGrid values;
  /// 1 where the primal option is selected, 0 for the learner, NaN on walls.
  ValueGrid membership;
};

/// Per-state values and initiation-set membership at the run's threshold, or at G >= tau when tau is given.
inline Heatmap heatmap_from_tables(const GridMeta &meta, const RunConfig &c, const SourcePolicy *mu, const GTable &g,
                                   const QTable &q, const VTable &v, HeatmapTable which,
                                   std::optional<double> tau = std::nullopt) {
  const std::size_t n = meta.num_states();
  if (g.num_states() != n || q.num_states() != n || v.num_states() != n)
    throw std::invalid_argument("heatmap: tables do not match the layout");
  std::vector<double> values(n), member(n, 0.0);
  LearnerTables tables;
  tables.behavior_v = &v;
  if (c.train.algorithm == Algorithm::LisprRecovery) tables.recovery_q = &q;
  if (c.train.algorithm == Algorithm::LisprStudent) tables.student_q = &q;
  for (StateId s = 0; s < n; ++s) {
    const double gs = mu ? success(g, *mu, s) : 0.0;
    switch (which) {
    case HeatmapTable::G: values[s] = gs; break;
    case HeatmapTable::V: values[s] = v(s); break;
    case HeatmapTable::QMax: values[s] = q.max(s); break;
    }
    if (!mu) continue;
    if (tau) member[s] = gs >= *tau ? 1.0 : 0.0;
    else member[s] = gs >= threshold_value(c.train.threshold, s, tables) - c.train.threshold.tolerance ? 1.0 : 0.0;
  }
  return {render_values(values, meta), render_values(member, meta)};
}

inline std::string grid_csv(const ValueGrid &grid) {
  std::string out;
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      if (c) out += ",";
      out += fmt_double(grid.at(r, c));
    }
    out += "\n";
  }
  return out;
}

/// Reads a run directory back and writes heatmap_<table>.csv and membership.csv next to it.
inline Heatmap export_heatmap(const fs::path &run_dir, HeatmapTable which, std::optional<double> tau = std::nullopt) {
  for (const char *f : {"meta.json", "g_table.csv", "q_learner.csv", "v_behavior.csv"})
    if (!fs::exists(run_dir / f)) throw std::runtime_error("heatmap: missing artifact " + (run_dir / f).string());
  const auto meta_json = json::parse(read_text_file(run_dir / "meta.json"));
  const auto cfg = parse_run_config(meta_json.at("config"));
  const auto env = make_environment(cfg.env, cfg.variant, cfg.layout, cfg.gamma);
  const auto g = read_action_table<GTable>(run_dir / "g_table.csv");
  const auto q = read_action_table<QTable>(run_dir / "q_learner.csv");
  const auto v = read_state_table(run_dir / "v_behavior.csv");
  std::optional<Policy> mu;
  if (fs::exists(run_dir / "mu_policy.csv")) mu = read_policy(run_dir / "mu_policy.csv");
  auto hm = heatmap_from_tables(env.world.meta, cfg, mu ? &*mu : nullptr, g, q, v, which, tau);
  const char *name = which == HeatmapTable::G ? "g" : which == HeatmapTable::V ? "v" : "qmax";
  write_text_file(run_dir / (std::string("heatmap_") + name + ".csv"), grid_csv(hm.values));
  write_text_file(run_dir / "membership.csv", grid_csv(hm.membership));
  return hm;
}

} // namespace lispr
