// Command-line front end: single runs, drop-rate sweeps and trace metrics.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>

#include "stigsim/harness.hpp"

using namespace stigsim;

namespace {

constexpr int kExitIncomplete = 2;
constexpr int kExitError = 1;

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, const std::filesystem::path& out)
{
    auto scenario = load_scenario(path);
    if (seed)
        scenario.world.seed = *seed;
    const auto result = run_scenario(scenario, out);
    const auto& s = result.summary;
    std::printf("%s after %lld steps (%.1f s), max bandwidth ratio %.4f\n", s.completed ? "locked" : "incomplete",
                static_cast<long long>(s.total_steps), s.completion_time, s.max_bandwidth_ratio);
    std::printf("trace: %s\nsummary: %s\n", (out / scenario.trace_file).c_str(), (out / scenario.summary_file).c_str());
    return s.completed ? 0 : kExitIncomplete;
}

int cmd_sweep(const std::string& path, const std::vector<double>& rates, std::size_t seed_count, unsigned threads,
              const std::filesystem::path& out)
{
    const auto scenario = load_scenario(path);
    for (double r : rates)
        if (!(r >= 0.0 && r <= 1.0))
            throw ScenarioError("--rates: " + std::to_string(r) + " is outside [0, 1]");
    std::vector<std::uint64_t> seeds(seed_count);
    std::iota(seeds.begin(), seeds.end(), std::uint64_t{1});

    const auto result = sweep_droprate(scenario, rates, seeds, threads);
    std::filesystem::create_directories(out);
    std::ofstream runs_file(out / "sweep_runs.csv");
    write_sweep_runs(runs_file, result);
    std::ofstream rates_file(out / "sweep_rates.csv");
    write_sweep_rates(rates_file, result);
    write_sweep_rates(std::cout, result);

    const bool all = std::all_of(result.runs.begin(), result.runs.end(), [](const SweepRun& r) { return r.completed; });
    return all ? 0 : kExitIncomplete;
}

int cmd_metrics(const std::string& path, std::size_t window)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error(path + ": cannot open trace");
    const auto trace = read_trace(in);
    std::set<RobotId> robots;
    for (const auto& r : trace)
        robots.insert(r.robot);

    nlohmann::json out;
    out["robots"] = robots.size();
    out["rows"] = trace.size();
    out["window"] = window;
    const auto series = bandwidth_moving_average(trace, window);
    out["max_bandwidth_ratio"] = max_moving_average(series);
    nlohmann::json per_robot = nlohmann::json::object();
    for (const auto& [id, s] : series)
        per_robot[std::to_string(id)] = s.empty() ? 0.0 : *std::max_element(s.begin(), s.end());
    out["max_bandwidth_ratio_by_robot"] = per_robot;
    nlohmann::json ratios = nlohmann::json::object();
    if (robots.size() >= 2)
        for (const auto& [state, ratio] : neighbor_ratio_by_state(trace, robots.size()))
            ratios[to_string(state)] = ratio;
    out["neighbor_ratio_by_state"] = ratios;
    std::cout << out.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Swarm coordination simulator: virtual stigmergy, barriers and formation task allocation"};
    app.require_subcommand(1);

    std::string scenario_path, trace_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::vector<double> rates;
    std::size_t seeds = 10;
    unsigned threads = 0;
    std::size_t window = kDefaultWindow;

    auto* run = app.add_subcommand("run", "Run one scenario and write its trace and summary");
    run->add_option("scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--out", out_dir, "Output directory")->capture_default_str();

    auto* sweep = app.add_subcommand("sweep", "Run a scenario over drop rates and seeds 1..n");
    sweep->add_option("scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--rates", rates, "Comma-separated drop rates")->required()->delimiter(',');
    sweep->add_option("--seeds", seeds, "Number of seeds per rate")->required()->check(CLI::PositiveNumber);
    sweep->add_option("--threads", threads, "Worker threads (0: hardware concurrency)");
    sweep->add_option("--out", out_dir, "Output directory")->capture_default_str();

    auto* metrics = app.add_subcommand("metrics", "Bandwidth and neighbor-ratio metrics of a trace file");
    metrics->add_option("trace", trace_path, "Trace CSV file")->required()->check(CLI::ExistingFile);
    metrics->add_option("--window", window, "Moving-average window in samples")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run)
            return cmd_run(scenario_path, seed, out_dir);
        if (*sweep)
            return cmd_sweep(scenario_path, rates, seeds, threads, out_dir);
        return cmd_metrics(trace_path, window);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
}
