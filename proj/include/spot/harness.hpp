#pragma once

// Experiment front-end: flat key=value configuration, ablation cells, a
// worker pool over (cell, seed) runs, and the CSV/JSON/text artifacts.
//
// Artifact layout under <output root>/<output>:
//   <cell>/seed_<n>/steps.csv        per-step log (optional)
//   <cell>/seed_<n>/trials.csv       training trials
//   <cell>/seed_<n>/eval_trials.csv  evaluation trials
//   <cell>/seed_<n>/validation.csv   validation checkpoints
//   <cell>/seed_<n>/q_table.txt      sorted Q-table records
//   <cell>/seed_<n>/run.json         per-run metrics
//   <cell>/summary.json              min/max over seeds
//   summary.json                     train: the single cell's summary
//   table.csv, table.txt, sweep.json sweep: combined ablation table
//
// The output root is the SPOT_OUTPUT_ROOT environment variable when set, the
// working directory otherwise; absolute output paths ignore it.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spot/blockworld.hpp"
#include "spot/gridworld.hpp"
#include "spot/trainer.hpp"

namespace spot::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRunFailed = 1;
inline constexpr int kExitInvalidConfig = 2;
inline constexpr int kExitIoFailure = 3;

inline constexpr const char* kOutputRootEnv = "SPOT_OUTPUT_ROOT";

inline constexpr const char* kStepCsvHeader =
    "run_id,trial_id,step,action_type,action_id,masked_policy_flag,success,instant_reward,"
    "trial_reward,progress,epsilon";
inline constexpr const char* kTrialCsvHeader = "trial_id,completed,actions,ideal,efficiency,termination";

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EnvKind { GridWorld, BlockWorld };

std::string_view to_string(EnvKind e);
EnvKind env_kind_from_string(std::string_view name);
RewardKind reward_kind_from_string(std::string_view name);

/// One ablation row: (use_mask, use_spotq, reward kind).
struct Cell {
  bool use_mask = false;
  bool use_spotq = false;
  RewardKind reward = RewardKind::Sparse;

  /// "none|mask|mask+spotq" ":" reward name, e.g. "mask+spotq:progress".
  std::string label() const;
  bool operator==(const Cell&) const = default;
};

Cell parse_cell(std::string_view text);

/// Table III (grid world) or Table I (block world) row structure.
std::vector<Cell> default_cells(EnvKind env);

struct ExperimentSpec {
  EnvKind environment = EnvKind::GridWorld;
  blocks::Task task = blocks::Task::StackOfK;
  int goal_size = 4;
  int num_blocks = 4;
  int action_limit = 0;  // 0: environment default
  std::string encoding = "local";
  std::optional<std::filesystem::path> layout;  // fixed scenario text file
  std::vector<Cell> cells;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output = "runs";
  std::size_t eval_trials = 100;
  std::uint64_t eval_seed = 20200531;
  std::size_t workers = 0;  // 0: hardware concurrency
  // Hyperparameters shared by every run; mask/spotq/reward/seed are per run.
  AgentConfig agent;

  /// Throws ConfigError unless there is at least one cell and min_seeds seeds.
  void validate(std::size_t min_seeds) const;
};

/// Tuned per-environment defaults (see the decisions ledger).
AgentConfig default_agent(EnvKind env);

using KeyValues = std::map<std::string, std::string>;

/// Parses "key = value" lines; '#' starts a comment. Throws ConfigError.
KeyValues parse_key_values(std::istream& in);
/// Throws IoError when the file cannot be read.
KeyValues read_config_file(const std::filesystem::path& path);

/// Builds a spec from defaults overridden by kv. Unknown keys and malformed
/// values throw ConfigError.
ExperimentSpec spec_from_key_values(const KeyValues& kv);

/// Throws ConfigError for unreadable or malformed layout files.
EnvFactory make_env_factory(const ExperimentSpec& spec);

std::filesystem::path output_root();
std::filesystem::path resolve_output(const std::filesystem::path& p);

struct RunResult {
  Cell cell;
  std::uint64_t seed = 0;
  std::string run_id;
  EvalSummary eval;
  std::optional<std::size_t> convergence_action;
  std::size_t lava_entries = 0;
  std::size_t masked_actions_executed = 0;
  std::string error;  // non-empty when the run crashed
};

/// Trains, evaluates and writes the per-run artifacts into dir.
RunResult execute_run(const ExperimentSpec& spec, const Cell& cell, std::uint64_t seed,
                      const std::filesystem::path& dir);

/// Runs every (cell, seed) pair of the spec in a worker pool. Results are
/// ordered by cell, then seed.
std::vector<RunResult> run_all(const ExperimentSpec& spec, const std::filesystem::path& out_dir);

struct CellSummary {
  Cell cell;
  std::size_t runs = 0;
  std::size_t failed_runs = 0;
  double completion_rate_min = 0.0;
  double completion_rate_max = 0.0;
  double efficiency_min = 0.0;
  double efficiency_max = 0.0;
  // Runs that never converged count as infinite: max is empty if any did.
  std::optional<std::size_t> convergence_min;
  std::optional<std::size_t> convergence_max;
  std::optional<std::size_t> convergence_median;
};

CellSummary summarize_cell(const Cell& cell, const std::vector<RunResult>& runs);
std::string summary_json(const CellSummary& s);

void write_step_csv(std::ostream& out, const std::string& run_id, const std::vector<StepRecord>& steps);
void write_trial_csv(std::ostream& out, const std::vector<TrialRecord>& trials);
/// Reads the columns of write_trial_csv back. Throws ConfigError.
std::vector<TrialRecord> read_trial_csv(std::istream& in);

void write_table_csv(std::ostream& out, const std::vector<CellSummary>& rows, std::size_t budget);
void write_table_text(std::ostream& out, const std::vector<CellSummary>& rows, std::size_t budget);

int cli_train(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);
int cli_sweep(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);

struct EvalRequest {
  ExperimentSpec spec;  // environment, layout, eval_seed, eval_trials
  std::filesystem::path model;
  bool use_mask = true;
  std::optional<std::filesystem::path> json_out;
  std::optional<std::filesystem::path> trace_out;
};

int cli_eval(const EvalRequest& req, std::ostream& out, std::ostream& err);

/// Full command line: spot train|eval|sweep [--config FILE] [flags].
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spot::harness
