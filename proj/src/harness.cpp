#include "spot/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

namespace spot::harness {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long n = std::stoull(v, &used);
      if (used == v.size()) return n;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing " + p.string());
}

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

Termination termination_from_string(std::string_view s) {
  for (Termination t : {Termination::None, Termination::Complete, Termination::ActionLimit,
                        Termination::SituationRemoval, Termination::LavaDeath}) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown termination '" + std::string(s) + "'");
}

ordered_json optional_json(const std::optional<std::size_t>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json eval_json(const EvalSummary& e) {
  ordered_json j;
  j["trials"] = e.trials;
  j["completed"] = e.completed;
  j["completion_rate"] = e.completion_rate;
  j["mean_efficiency"] = e.mean_efficiency;
  ordered_json rates = ordered_json::object();
  for (int t = 0; t < kNumActionTypes; ++t) {
    if (e.success_rate[t]) rates[std::string(to_string(static_cast<ActionType>(t)))] = *e.success_rate[t];
  }
  j["success_rates"] = rates;
  return j;
}

std::string convergence_cell(const CellSummary& s, std::size_t budget) {
  if (s.runs == 0) return "-";
  if (!s.convergence_min) return ">" + std::to_string(budget);
  const std::string hi = s.convergence_max ? std::to_string(*s.convergence_max) : ">" + std::to_string(budget);
  // "to" rather than "-" so an unconverged maximum (">budget") stays readable.
  return std::to_string(*s.convergence_min) + (s.convergence_max ? "-" : " to ") + hi;
}

std::vector<std::string> table_row(const CellSummary& s, std::size_t budget) {
  return {s.cell.use_spotq ? "yes" : "no",
          s.cell.use_mask ? "yes" : "no",
          std::string(to_string(s.cell.reward)),
          fmt_percent(s.completion_rate_min) + "-" + fmt_percent(s.completion_rate_max),
          fmt_percent(s.efficiency_min) + "-" + fmt_percent(s.efficiency_max),
          convergence_cell(s, budget)};
}

const std::vector<std::string> kTableColumns = {"SPOT-Q", "Mask", "Reward", "Trials%", "Efficiency%",
                                                "Actions-to-convergence"};

std::string cell_dir_name(const Cell& c) {
  std::string name = c.label();
  std::replace(name.begin(), name.end(), ':', '_');
  std::replace(name.begin(), name.end(), '+', '-');
  return name;
}

std::vector<CellSummary> summarize_cells(const ExperimentSpec& spec, const std::vector<RunResult>& results) {
  std::vector<CellSummary> rows;
  for (const Cell& cell : spec.cells) {
    std::vector<RunResult> mine;
    for (const RunResult& r : results) {
      if (r.cell == cell) mine.push_back(r);
    }
    rows.push_back(summarize_cell(cell, mine));
  }
  return rows;
}

std::size_t count_failures(const std::vector<RunResult>& results, std::ostream& err) {
  std::size_t failures = 0;
  for (const RunResult& r : results) {
    if (!r.error.empty()) {
      ++failures;
      err << "run " << r.run_id << " failed: " << r.error << "\n";
    }
  }
  return failures;
}

}  // namespace

std::string_view to_string(EnvKind e) { return e == EnvKind::GridWorld ? "gridworld" : "blockworld"; }

EnvKind env_kind_from_string(std::string_view name) {
  if (name == "gridworld" || name == "grid") return EnvKind::GridWorld;
  if (name == "blockworld" || name == "blocks") return EnvKind::BlockWorld;
  throw ConfigError("unknown environment '" + std::string(name) + "'");
}

RewardKind reward_kind_from_string(std::string_view name) {
  for (RewardKind k : {RewardKind::Base, RewardKind::SR, RewardKind::Progress, RewardKind::Trial,
                       RewardKind::Discounted, RewardKind::Sparse}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown reward '" + std::string(name) + "'");
}

std::string Cell::label() const {
  const char* flags = use_spotq ? "mask+spotq" : (use_mask ? "mask" : "none");
  return std::string(flags) + ":" + std::string(to_string(reward));
}

Cell parse_cell(std::string_view text) {
  const std::string t = trim(text);
  const auto colon = t.find(':');
  if (colon == std::string::npos) throw ConfigError("cell '" + t + "' must look like flags:reward");
  const std::string flags = trim(t.substr(0, colon));
  Cell c;
  c.reward = reward_kind_from_string(trim(t.substr(colon + 1)));
  if (flags == "none") {
  } else if (flags == "mask") {
    c.use_mask = true;
  } else if (flags == "mask+spotq" || flags == "spotq") {
    c.use_mask = c.use_spotq = true;
  } else {
    throw ConfigError("cell flags '" + flags + "' must be none, mask or mask+spotq");
  }
  return c;
}

std::vector<Cell> default_cells(EnvKind env) {
  if (env == EnvKind::GridWorld) {
    return {parse_cell("none:sparse"), parse_cell("mask:sparse"), parse_cell("mask+spotq:sparse"),
            parse_cell("mask+spotq:progress")};
  }
  return {parse_cell("none:discounted"), parse_cell("mask:discounted"),   parse_cell("none:base"),
          parse_cell("none:sr"),         parse_cell("none:progress"),     parse_cell("none:trial"),
          parse_cell("mask:trial"),      parse_cell("mask+spotq:trial"),  parse_cell("mask+spotq:progress")};
}

AgentConfig default_agent(EnvKind env) {
  AgentConfig a;
  if (env == EnvKind::GridWorld) {
    a.reward = RewardConfig::grid_world_defaults();
    a.reward.kind = RewardKind::Sparse;
    a.learning_rate = 0.5;
    a.train_steps_per_action = 2;
    a.replay.per_exponent = 0.7;
    a.training_action_budget = 200000;
  } else {
    a.reward = RewardConfig::block_world_defaults();
    a.reward.kind = RewardKind::Progress;
    a.reward.learn_discount = 0.5;
    a.learning_rate = 0.05;
    a.train_steps_per_action = 1;
    a.replay.per_exponent = 0.0;
    a.epsilon_end = 0.1;
    a.training_action_budget = 20000;
  }
  return a;
}

void ExperimentSpec::validate(std::size_t min_seeds) const {
  if (cells.empty()) throw ConfigError("experiment needs at least one cell");
  if (seeds.size() < min_seeds) {
    throw ConfigError("experiment needs at least " + std::to_string(min_seeds) + " seed(s), got " +
                      std::to_string(seeds.size()));
  }
  if (eval_trials == 0) throw ConfigError("eval_trials must be positive");
  if (encoding != "local" && encoding != "exact") throw ConfigError("encoding must be local or exact");
  if (goal_size < 1 || num_blocks < 1) throw ConfigError("goal_size and num_blocks must be positive");
  for (const Cell& c : cells) {
    AgentConfig a = agent;
    a.use_mask = c.use_mask;
    a.use_spotq = c.use_spotq;
    a.reward.kind = c.reward;
    a.validate();
  }
}

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  return parse_key_values(in);
}

ExperimentSpec spec_from_key_values(const KeyValues& kv) {
  ExperimentSpec spec;
  if (auto it = kv.find("env"); it != kv.end()) spec.environment = env_kind_from_string(it->second);
  spec.agent = default_agent(spec.environment);
  AgentConfig& a = spec.agent;

  std::optional<bool> mask;
  std::optional<bool> spotq;
  std::optional<RewardKind> reward;
  bool seeds_given = false;

  for (const auto& [key, value] : kv) {
    if (key == "env") {
      continue;
    } else if (key == "task") {
      spec.task = blocks::task_from_string(value);
    } else if (key == "goal_size") {
      spec.goal_size = static_cast<int>(parse_uint(key, value));
    } else if (key == "num_blocks") {
      spec.num_blocks = static_cast<int>(parse_uint(key, value));
    } else if (key == "action_limit") {
      spec.action_limit = static_cast<int>(parse_uint(key, value));
    } else if (key == "encoding") {
      spec.encoding = value;
    } else if (key == "layout") {
      if (!value.empty()) spec.layout = value;
    } else if (key == "cells") {
      spec.cells.clear();
      for (const std::string& c : split(value, ',')) spec.cells.push_back(parse_cell(c));
      if (spec.cells.empty()) throw ConfigError("cells list is empty");
    } else if (key == "mask") {
      mask = parse_bool(key, value);
    } else if (key == "spotq") {
      spotq = parse_bool(key, value);
    } else if (key == "reward") {
      reward = reward_kind_from_string(value);
    } else if (key == "seed" || key == "seeds") {
      spec.seeds.clear();
      for (const std::string& s : split(value, ',')) spec.seeds.push_back(parse_uint(key, s));
      seeds_given = true;
    } else if (key == "budget") {
      a.training_action_budget = parse_uint(key, value);
    } else if (key == "output") {
      spec.output = value;
    } else if (key == "eval_trials") {
      spec.eval_trials = parse_uint(key, value);
    } else if (key == "eval_seed") {
      spec.eval_seed = parse_uint(key, value);
    } else if (key == "workers") {
      spec.workers = parse_uint(key, value);
    } else if (key == "record_steps") {
      a.record_steps = parse_bool(key, value);
    } else if (key == "concurrent") {
      a.concurrent = parse_bool(key, value);
    } else if (key == "epsilon_start") {
      a.epsilon_start = parse_real(key, value);
    } else if (key == "epsilon_end") {
      a.epsilon_end = parse_real(key, value);
    } else if (key == "epsilon_decay_steps") {
      a.epsilon_decay_steps = parse_uint(key, value);
    } else if (key == "learning_rate") {
      a.learning_rate = parse_real(key, value);
    } else if (key == "train_steps") {
      a.train_steps_per_action = static_cast<int>(parse_uint(key, value));
    } else if (key == "validation_every") {
      a.validation_every = parse_uint(key, value);
    } else if (key == "validation_trials") {
      a.validation_trials = parse_uint(key, value);
    } else if (key == "learn_discount") {
      a.reward.learn_discount = parse_real(key, value);
    } else if (key == "trial_discount") {
      a.reward.trial_discount = parse_real(key, value);
    } else if (key == "trial_inner") {
      a.reward.trial_inner = reward_kind_from_string(value);
    } else if (key == "per_exponent") {
      a.replay.per_exponent = parse_real(key, value);
    } else if (key == "type_filter_prob") {
      a.replay.type_filter_prob = parse_real(key, value);
    } else if (key == "replay_capacity") {
      a.replay.capacity = parse_uint(key, value);
    } else if (key.rfind("weight_", 0) == 0) {
      a.reward.weights[action_type_from_string(key.substr(7))] = parse_real(key, value);
    } else {
      throw ConfigError("unknown configuration key '" + key + "'");
    }
  }

  if (!seeds_given) spec.seeds = {1};
  if (spec.cells.empty()) {
    Cell c;
    // Defaults to the full method; --no-mask alone gives the plain learner.
    c.use_mask = mask.value_or(true);
    c.use_spotq = spotq.value_or(c.use_mask);
    c.reward = reward.value_or(a.reward.kind);
    spec.cells.push_back(c);
  } else if (mask || spotq || reward) {
    throw ConfigError("give either cells or mask/spotq/reward, not both");
  }
  if (a.replay.capacity == 0) throw ConfigError("replay_capacity must be positive");
  if (!(a.replay.per_exponent >= 0.0)) throw ConfigError("per_exponent must be >= 0");
  if (!(a.replay.type_filter_prob >= 0.0 && a.replay.type_filter_prob <= 1.0)) {
    throw ConfigError("type_filter_prob must lie in [0, 1]");
  }
  return spec;
}

EnvFactory make_env_factory(const ExperimentSpec& spec) {
  std::optional<std::string> layout_text;
  if (spec.layout) {
    try {
      layout_text = read_file(*spec.layout);
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
  }
  if (spec.environment == EnvKind::GridWorld) {
    const auto enc = spec.encoding == "exact" ? grid::Encoding::Exact : grid::Encoding::Local;
    grid::GenerateOptions opts;
    if (spec.action_limit > 0) opts.action_limit = spec.action_limit;
    if (layout_text) {
      grid::GridWorld g;
      try {
        g = grid::from_text(*layout_text, opts.action_limit);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid grid layout: ") + e.what());
      }
      return [g, enc] { return std::make_unique<grid::GridWorldEnv>(g, enc); };
    }
    return [opts, enc] { return std::make_unique<grid::GridWorldEnv>(opts, enc); };
  }
  const auto enc = spec.encoding == "exact" ? blocks::Encoding::Exact : blocks::Encoding::Local;
  if (layout_text) {
    blocks::BlockState s;
    try {
      s = blocks::from_text(*layout_text);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("invalid block layout: ") + e.what());
    }
    if (spec.action_limit > 0) s.action_limit = spec.action_limit;
    return [s, enc] { return std::make_unique<blocks::BlockWorldEnv>(s, enc); };
  }
  blocks::ResetOptions opts;
  opts.goal_size = spec.goal_size;
  opts.num_blocks = spec.num_blocks;
  opts.action_limit = spec.action_limit;
  const blocks::Task task = spec.task;
  return [task, opts, enc] { return std::make_unique<blocks::BlockWorldEnv>(task, opts, enc); };
}

fs::path output_root() {
  const char* root = std::getenv(kOutputRootEnv);
  return root && *root ? fs::path(root) : fs::current_path();
}

fs::path resolve_output(const fs::path& p) { return p.is_absolute() ? p : output_root() / p; }

void write_step_csv(std::ostream& out, const std::string& run_id, const std::vector<StepRecord>& steps) {
  out << kStepCsvHeader << "\n";
  for (const StepRecord& s : steps) {
    out << run_id << ',' << s.trial_id << ',' << s.step << ',' << to_string(s.action_type) << ','
        << s.action_id << ',' << (s.masked_policy ? 1 : 0) << ',' << (s.success ? 1 : 0) << ','
        << fmt_real(s.instant_reward) << ',' << (s.trial_reward ? fmt_real(*s.trial_reward) : "") << ','
        << fmt_real(s.progress) << ',' << fmt_real(s.epsilon) << "\n";
  }
}

void write_trial_csv(std::ostream& out, const std::vector<TrialRecord>& trials) {
  out << kTrialCsvHeader << "\n";
  for (const TrialRecord& t : trials) {
    out << t.trial_id << ',' << (t.completed ? 1 : 0) << ',' << t.actions_taken << ',' << t.ideal_actions << ','
        << fmt_real(t.efficiency()) << ',' << to_string(t.termination) << "\n";
  }
}

std::vector<TrialRecord> read_trial_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kTrialCsvHeader) throw ConfigError("bad trial CSV header");
  std::vector<TrialRecord> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw ConfigError("bad trial CSV row: " + line);
    TrialRecord t;
    t.trial_id = parse_uint("trial_id", f[0]);
    t.completed = f[1] == "1";
    t.actions_taken = static_cast<int>(parse_uint("actions", f[2]));
    t.ideal_actions = static_cast<int>(parse_uint("ideal", f[3]));
    t.termination = termination_from_string(f[5]);
    out.push_back(t);
  }
  return out;
}

RunResult execute_run(const ExperimentSpec& spec, const Cell& cell, std::uint64_t seed, const fs::path& dir) {
  RunResult result;
  result.cell = cell;
  result.seed = seed;
  result.run_id = cell.label() + "/seed" + std::to_string(seed);

  AgentConfig cfg = spec.agent;
  cfg.use_mask = cell.use_mask;
  cfg.use_spotq = cell.use_spotq;
  cfg.reward.kind = cell.reward;
  cfg.seed = seed;

  const EnvFactory factory = make_env_factory(spec);
  TrainingResult trained = run_training(factory, cfg);
  result.eval = evaluate(*trained.q, factory, spec.eval_trials, spec.eval_seed, cell.use_mask);
  result.convergence_action = trained.convergence_action;
  result.lava_entries = trained.lava_entries;
  result.masked_actions_executed = trained.masked_actions_executed;

  make_dirs(dir);
  if (cfg.record_steps) {
    std::ostringstream steps;
    write_step_csv(steps, result.run_id, trained.steps);
    write_file(dir / "steps.csv", steps.str());
  }
  std::ostringstream trials;
  write_trial_csv(trials, trained.trials);
  write_file(dir / "trials.csv", trials.str());
  std::ostringstream eval_trials;
  write_trial_csv(eval_trials, result.eval.records);
  write_file(dir / "eval_trials.csv", eval_trials.str());
  std::ostringstream validation;
  validation << "action,completed,trials\n";
  for (const ValidationPoint& v : trained.validations) {
    validation << v.action << ',' << v.completed << ',' << v.trials << "\n";
  }
  write_file(dir / "validation.csv", validation.str());
  std::ostringstream qtext;
  qtext << "# spot q-table env=" << to_string(spec.environment) << " encoding=" << spec.encoding << "\n";
  trained.q->save(qtext);
  write_file(dir / "q_table.txt", qtext.str());

  ordered_json run;
  run["run_id"] = result.run_id;
  run["cell"] = cell.label();
  run["seed"] = seed;
  run["budget"] = cfg.training_action_budget;
  run["training_trials"] = trained.trials.size();
  run["convergence_action"] = optional_json(trained.convergence_action);
  run["lava_entries"] = trained.lava_entries;
  run["masked_actions_executed"] = trained.masked_actions_executed;
  run["evaluation"] = eval_json(result.eval);
  write_file(dir / "run.json", run.dump(2) + "\n");
  return result;
}

std::vector<RunResult> run_all(const ExperimentSpec& spec, const fs::path& out_dir) {
  struct Job {
    Cell cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const Cell& c : spec.cells) {
    for (std::uint64_t s : spec.seeds) jobs.push_back({c, s});
  }
  std::vector<RunResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      const fs::path dir = out_dir / cell_dir_name(job.cell) / ("seed_" + std::to_string(job.seed));
      try {
        results[i] = execute_run(spec, job.cell, job.seed, dir);
      } catch (const std::exception& e) {
        results[i].cell = job.cell;
        results[i].seed = job.seed;
        results[i].run_id = job.cell.label() + "/seed" + std::to_string(job.seed);
        results[i].error = e.what();
      }
    }
  };
  std::size_t n = spec.workers > 0 ? spec.workers : std::max(1u, std::thread::hardware_concurrency());
  n = std::min(n, jobs.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  return results;
}

CellSummary summarize_cell(const Cell& cell, const std::vector<RunResult>& runs) {
  CellSummary s;
  s.cell = cell;
  std::vector<double> comp;
  std::vector<double> eff;
  std::vector<std::optional<std::size_t>> conv;
  for (const RunResult& r : runs) {
    if (!r.error.empty()) {
      ++s.failed_runs;
      continue;
    }
    ++s.runs;
    comp.push_back(r.eval.completion_rate);
    eff.push_back(r.eval.mean_efficiency);
    conv.push_back(r.convergence_action);
  }
  if (s.runs == 0) return s;
  s.completion_rate_min = *std::min_element(comp.begin(), comp.end());
  s.completion_rate_max = *std::max_element(comp.begin(), comp.end());
  s.efficiency_min = *std::min_element(eff.begin(), eff.end());
  s.efficiency_max = *std::max_element(eff.begin(), eff.end());
  // Never-converged runs sort last as +infinity.
  std::sort(conv.begin(), conv.end(), [](const auto& a, const auto& b) {
    if (!a || !b) return a.has_value() && !b.has_value();
    return *a < *b;
  });
  s.convergence_min = conv.front();
  s.convergence_max = conv.back();
  s.convergence_median = conv[(conv.size() - 1) / 2];
  return s;
}

std::string summary_json(const CellSummary& s) {
  ordered_json j;
  j["cell"] = s.cell.label();
  j["runs"] = s.runs;
  j["failed_runs"] = s.failed_runs;
  j["completion_rate_min"] = s.completion_rate_min;
  j["completion_rate_max"] = s.completion_rate_max;
  j["efficiency_min"] = s.efficiency_min;
  j["efficiency_max"] = s.efficiency_max;
  j["convergence_actions_min"] = optional_json(s.convergence_min);
  j["convergence_actions_max"] = optional_json(s.convergence_max);
  j["convergence_actions_median"] = optional_json(s.convergence_median);
  return j.dump(2) + "\n";
}

void write_table_csv(std::ostream& out, const std::vector<CellSummary>& rows, std::size_t budget) {
  for (std::size_t i = 0; i < kTableColumns.size(); ++i) out << (i ? "," : "") << kTableColumns[i];
  out << "\n";
  for (const CellSummary& s : rows) {
    const auto r = table_row(s, budget);
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << "\n";
  }
}

void write_table_text(std::ostream& out, const std::vector<CellSummary>& rows, std::size_t budget) {
  std::vector<std::vector<std::string>> cells{kTableColumns};
  for (const CellSummary& s : rows) cells.push_back(table_row(s, budget));
  std::vector<std::size_t> width(kTableColumns.size(), 0);
  for (const auto& r : cells) {
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  for (const auto& r : cells) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::string field = r[i];
      field.resize(width[i], ' ');
      line += (i ? "  " : "") + field;
    }
    out << trim(line) << "\n";
  }
}

int cli_train(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  try {
    spec.validate(1);
    make_env_factory(spec);  // surfaces layout errors before any work
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  }
  try {
    const fs::path dir = resolve_output(spec.output);
    make_dirs(dir);
    const std::vector<RunResult> results = run_all(spec, dir);
    const std::size_t failures = count_failures(results, err);
    const std::vector<CellSummary> rows = summarize_cells(spec, results);
    for (const CellSummary& s : rows) write_file(dir / cell_dir_name(s.cell) / "summary.json", summary_json(s));
    write_file(dir / "summary.json", summary_json(rows.front()));
    for (const RunResult& r : results) {
      if (!r.error.empty()) continue;
      out << r.run_id << ": completion " << fmt_percent(r.eval.completion_rate) << "%, efficiency "
          << fmt_percent(r.eval.mean_efficiency) << "%, convergence "
          << (r.convergence_action ? std::to_string(*r.convergence_action) : std::string("none")) << "\n";
    }
    out << "artifacts: " << dir.string() << "\n";
    return failures ? kExitRunFailed : kExitOk;
  } catch (const IoError& e) {
    err << "I/O failure: " << e.what() << "\n";
    return kExitIoFailure;
  }
}

int cli_sweep(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  try {
    spec.validate(2);
    make_env_factory(spec);
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  }
  try {
    const fs::path dir = resolve_output(spec.output);
    make_dirs(dir);
    const std::vector<RunResult> results = run_all(spec, dir);
    const std::size_t failures = count_failures(results, err);
    const std::vector<CellSummary> rows = summarize_cells(spec, results);
    ordered_json sweep = ordered_json::array();
    for (const CellSummary& s : rows) {
      const std::string js = summary_json(s);
      make_dirs(dir / cell_dir_name(s.cell));
      write_file(dir / cell_dir_name(s.cell) / "summary.json", js);
      sweep.push_back(ordered_json::parse(js));
    }
    std::ostringstream csv;
    write_table_csv(csv, rows, spec.agent.training_action_budget);
    write_file(dir / "table.csv", csv.str());
    std::ostringstream text;
    write_table_text(text, rows, spec.agent.training_action_budget);
    write_file(dir / "table.txt", text.str());
    write_file(dir / "sweep.json", sweep.dump(2) + "\n");
    out << text.str() << "artifacts: " << dir.string() << "\n";
    return failures ? kExitRunFailed : kExitOk;
  } catch (const IoError& e) {
    err << "I/O failure: " << e.what() << "\n";
    return kExitIoFailure;
  }
}

int cli_eval(const EvalRequest& req, std::ostream& out, std::ostream& err) {
  EnvFactory factory;
  TabularQ q;
  try {
    if (req.spec.eval_trials == 0) throw ConfigError("--trials must be positive");
    std::ifstream in(req.model);
    if (!in) throw ConfigError("cannot read model file " + req.model.string());
    try {
      q = TabularQ::load(in);
    } catch (const std::exception& e) {
      throw ConfigError("malformed model file " + req.model.string() + ": " + e.what());
    }
    factory = make_env_factory(req.spec);
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  }
  try {
    const EvalSummary summary = evaluate(q, factory, req.spec.eval_trials, req.spec.eval_seed, req.use_mask);
    out << "completion rate " << fmt_percent(summary.completion_rate) << "% (" << summary.completed << "/"
        << summary.trials << "), mean efficiency " << fmt_percent(summary.mean_efficiency) << "%\n";
    if (req.json_out) {
      ordered_json j = eval_json(summary);
      j["model"] = req.model.string();
      j["environment"] = std::string(to_string(req.spec.environment));
      j["seed"] = req.spec.eval_seed;
      j["mask"] = req.use_mask;
      const fs::path p = resolve_output(*req.json_out);
      if (p.has_parent_path()) make_dirs(p.parent_path());
      write_file(p, j.dump(2) + "\n");
    }
    if (req.trace_out) {
      // Greedy replay of every evaluation trial, one row per action.
      std::ostringstream trace;
      trace << "trial_id,step,action_type,action_id,success,progress,termination\n";
      Rng tie_rng(stream_seed(req.spec.eval_seed, 5));  // same stream as evaluate()
      auto env = factory();
      for (std::size_t i = 0; i < req.spec.eval_trials; ++i) {
        env->reset(evaluation_seed(req.spec.eval_seed, i));
        for (int step = 0; !env->terminal(); ++step) {
          const Observation obs = env->observe();
          const ActionMask allowed = req.use_mask ? obs.mask : ActionMask::all(obs.num_actions());
          const ActionId a = masked_argmax(q, obs, allowed, tie_rng);
          const Transition tr = env->step(a);
          trace << i << ',' << step << ',' << to_string(tr.outcome.action_type) << ',' << a << ','
                << (tr.outcome.success ? 1 : 0) << ',' << fmt_real(tr.outcome.progress_after) << ','
                << to_string(tr.event) << "\n";
        }
      }
      const fs::path p = resolve_output(*req.trace_out);
      if (p.has_parent_path()) make_dirs(p.parent_path());
      write_file(p, trace.str());
    }
    return kExitOk;
  } catch (const IoError& e) {
    err << "I/O failure: " << e.what() << "\n";
    return kExitIoFailure;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"SPOT reinforcement learning experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  KeyValues flags;
  std::string config_file;
  std::vector<std::string> overrides;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "key=value configuration file");
    sub->add_option("--set", overrides, "extra key=value override (repeatable)");
    sub->add_option_function<std::string>("--env", [&](const std::string& v) { flags["env"] = v; },
                                           "gridworld or blockworld");
    sub->add_option_function<std::string>("--task", [&](const std::string& v) { flags["task"] = v; },
                                           "stack, row or clear (block world)");
    sub->add_option_function<std::string>("--layout", [&](const std::string& v) { flags["layout"] = v; },
                                           "fixed scenario text file");
    sub->add_option_function<std::string>("--encoding", [&](const std::string& v) { flags["encoding"] = v; },
                                           "Q-key encoding: local or exact");
    sub->add_option_function<std::string>("--output", [&](const std::string& v) { flags["output"] = v; },
                                           "output directory (relative to SPOT_OUTPUT_ROOT)");
  };
  const auto add_training = [&](CLI::App* sub) {
    sub->add_flag_function("--mask,!--no-mask", [&](std::int64_t n) { flags["mask"] = n > 0 ? "1" : "0"; },
                           "mask certain-failure actions");
    sub->add_flag_function("--spotq,!--no-spotq", [&](std::int64_t n) { flags["spotq"] = n > 0 ? "1" : "0"; },
                           "SPOT-Q zero-reward masked targets (implies --mask)");
    sub->add_option_function<std::string>("--reward", [&](const std::string& v) { flags["reward"] = v; },
                                           "base, sr, progress, trial, discounted or sparse");
    sub->add_option_function<std::vector<std::string>>(
        "--seed,--seeds",
        [&](const std::vector<std::string>& v) {
          std::string joined;
          for (const auto& s : v) joined += (joined.empty() ? "" : ",") + s;
          flags["seeds"] = joined;
        },
        "training seed(s)");
    sub->add_option_function<std::string>("--budget", [&](const std::string& v) { flags["budget"] = v; },
                                           "training actions per run");
    sub->add_option_function<std::string>("--cells", [&](const std::string& v) { flags["cells"] = v; },
                                           "comma-separated cells, e.g. none:sparse,mask+spotq:progress");
    sub->add_option_function<std::string>("--workers", [&](const std::string& v) { flags["workers"] = v; },
                                           "parallel runs");
    sub->add_option_function<std::string>("--eval-trials",
                                           [&](const std::string& v) { flags["eval_trials"] = v; },
                                           "evaluation trials per run");
    sub->add_option_function<std::string>("--eval-seed", [&](const std::string& v) { flags["eval_seed"] = v; },
                                           "evaluation seed");
  };

  CLI::App* train = app.add_subcommand("train", "train one or more runs");
  add_common(train);
  add_training(train);
  CLI::App* sweep = app.add_subcommand("sweep", "run an ablation table");
  add_common(sweep);
  add_training(sweep);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a saved Q-table");
  add_common(eval);
  std::string model;
  std::string json_out;
  std::string trace_out;
  bool eval_mask = true;
  eval->add_option("--model", model, "q_table.txt written by train")->required();
  eval->add_option_function<std::string>("--trials", [&](const std::string& v) { flags["eval_trials"] = v; },
                                          "evaluation trials");
  eval->add_option_function<std::string>("--seed", [&](const std::string& v) { flags["eval_seed"] = v; },
                                          "evaluation seed");
  eval->add_flag("--mask,!--no-mask", eval_mask, "mask certain-failure actions (default on)");
  eval->add_option("--json", json_out, "write the summary JSON here");
  eval->add_option("--trace", trace_out, "write a per-action trace CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "invalid arguments: " << e.what() << "\n";
    return kExitInvalidConfig;
  }

  ExperimentSpec spec;
  std::vector<std::string> kv_keys;
  try {
    KeyValues kv;
    if (!config_file.empty()) kv = read_config_file(config_file);
    for (const std::string& o : overrides) {
      std::istringstream line(o);
      for (const auto& [k, v] : parse_key_values(line)) kv[k] = v;
    }
    for (const auto& [k, v] : flags) kv[k] = v;  // flags win
    for (const auto& [k, v] : kv) kv_keys.push_back(k);
    spec = spec_from_key_values(kv);
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const IoError& e) {
    err << "I/O failure: " << e.what() << "\n";
    return kExitIoFailure;
  }

  if (train->parsed()) return cli_train(spec, out, err);
  if (sweep->parsed()) {
    // Without an explicit cell selection a sweep runs the paper's ablation rows.
    const bool chosen = std::any_of(kv_keys.begin(), kv_keys.end(), [](const std::string& k) {
      return k == "cells" || k == "mask" || k == "spotq" || k == "reward";
    });
    if (!chosen) spec.cells = default_cells(spec.environment);
    return cli_sweep(spec, out, err);
  }

  EvalRequest req;
  req.spec = spec;
  req.model = model;
  req.use_mask = eval_mask;
  if (!json_out.empty()) req.json_out = json_out;
  if (!trace_out.empty()) req.trace_out = trace_out;
  return cli_eval(req, out, err);
}

}  // namespace spot::harness
