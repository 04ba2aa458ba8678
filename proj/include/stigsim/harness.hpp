#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stigsim/simworld.hpp"

namespace stigsim {

inline constexpr Step kDefaultStepCap = 20000;
inline constexpr std::size_t kDefaultWindow = 30;

struct Scenario {
    WorldConfig world;
    Step step_cap = kDefaultStepCap;
    std::string trace_file = "trace.csv";
    std::string summary_file = "summary.json";

    bool operator==(const Scenario&) const = default;
};

/// Parse or validation failure; the message starts with the offending field path.
class ScenarioError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);
nlohmann::json to_json(const Scenario& scenario);

struct RobotSummary {
    RobotId id = 0;
    RobotKind kind = RobotKind::Aerial;
    FsmState final_state = FsmState::TurnedOff;
    std::optional<Label> label;
    std::optional<RobotId> parent;
    std::optional<Step> join_step;
    std::optional<double> join_time;
    std::vector<Step> barrier_pass_steps;
};

struct Summary {
    std::uint64_t seed = 0;
    double drop_prob = 0.0;
    double step_period = 0.1;
    bool completed = false;
    Step total_steps = 0;
    double completion_time = 0.0;
    std::vector<RobotSummary> robots;
    double max_bandwidth_ratio = 0.0;
    std::map<FsmState, double> neighbor_ratios;
    std::size_t max_queue_length = 0;
    bool labels_unique = true;
    bool assignment_consistent = true;
    bool tree_consistent = true;
};

nlohmann::json to_json(const Summary& summary);

struct RunResult {
    Summary summary;
    std::vector<TraceRow> trace;
};

/// Steps a world until the formation is locked or the step cap is hit.
RunResult run_world(const Scenario& scenario);

/// run_world plus trace and summary files under `out_dir`.
RunResult run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir);

void write_trace(std::ostream& os, std::span<const TraceRow> rows);
std::vector<TraceRow> read_trace(std::istream& is);

/// Mean of neighbor_msgs_in / (N - 1) per state. Step 0 rows are skipped:
/// nothing can have been received before the first step.
std::map<FsmState, double> neighbor_ratio_by_state(std::span<const TraceRow> trace, std::size_t swarm_size);

/// Trailing moving average of bytes_out / 250 per robot.
std::map<RobotId, std::vector<double>> bandwidth_moving_average(std::span<const TraceRow> trace,
                                                                std::size_t window = kDefaultWindow);
double max_moving_average(const std::map<RobotId, std::vector<double>>& series);

struct SweepRun {
    double rate = 0.0;
    std::uint64_t seed = 0;
    bool completed = false;
    Step total_steps = 0;
    double completion_time = 0.0;
    double max_bandwidth_ratio = 0.0;
    bool labels_unique = true;
    bool assignment_consistent = true;
    bool max_bytes_ok = true;
};

struct SweepRate {
    double rate = 0.0;
    std::size_t runs = 0;
    double completion_ratio = 0.0;
    std::optional<double> median_completion_time;  // incomplete runs count as infinite
};

struct SweepResult {
    std::vector<SweepRun> runs;
    std::vector<SweepRate> rates;
};

SweepResult sweep_droprate(const Scenario& scenario, std::span<const double> rates,
                           std::span<const std::uint64_t> seeds, unsigned threads = 0);

void write_sweep_runs(std::ostream& os, const SweepResult& result);
void write_sweep_rates(std::ostream& os, const SweepResult& result);

}  // namespace stigsim
