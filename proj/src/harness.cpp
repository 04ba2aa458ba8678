#include "stigsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace stigsim {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg)
{
    throw ScenarioError(path + ": " + msg);
}

std::string join_path(const std::string& parent, const std::string& key)
{
    return parent.empty() ? key : parent + "." + key;
}

void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed)
{
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            fail(join_path(path, key), "unknown field");
    }
}

const json& require_object(const json& j, const std::string& path)
{
    if (!j.is_object())
        fail(path, "expected an object");
    return j;
}

double read_number(const json& obj, const char* key, const std::string& path, double fallback)
{
    auto it = obj.find(key);
    if (it == obj.end())
        return fallback;
    if (!it->is_number())
        fail(join_path(path, key), "expected a number");
    return it->get<double>();
}

template <class Int>
Int read_integer(const json& obj, const char* key, const std::string& path, Int fallback)
{
    auto it = obj.find(key);
    if (it == obj.end())
        return fallback;
    if (!it->is_number_integer())
        fail(join_path(path, key), "expected an integer");
    if (it->is_number_unsigned()) {
        const auto v = it->get<std::uint64_t>();
        if (v > static_cast<std::uint64_t>(std::numeric_limits<Int>::max()))
            fail(join_path(path, key), "out of range");
        return static_cast<Int>(v);
    }
    const auto v = it->get<std::int64_t>();
    if (v < static_cast<std::int64_t>(std::numeric_limits<Int>::min()) ||
        (v > 0 && static_cast<std::uint64_t>(v) > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())))
        fail(join_path(path, key), "out of range");
    return static_cast<Int>(v);
}

std::string read_string(const json& obj, const char* key, const std::string& path, std::string fallback)
{
    auto it = obj.find(key);
    if (it == obj.end())
        return fallback;
    if (!it->is_string())
        fail(join_path(path, key), "expected a string");
    return it->get<std::string>();
}

Pose read_pose(const json& j, const std::string& path)
{
    if (!j.is_array() || j.size() != 3 || !std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_number(); }))
        fail(path, "expected [x, y, z]");
    return Pose{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

RobotSpec parse_robot(const json& j, std::size_t index)
{
    const std::string path = "robots[" + std::to_string(index) + "]";
    require_object(j, path);
    reject_unknown(j, path, {"id", "kind", "pose"});
    if (!j.contains("id"))
        fail(path + ".id", "missing required field");
    RobotSpec spec;
    spec.id = read_integer<RobotId>(j, "id", path, 0);
    const auto kind = read_string(j, "kind", path, "aerial");
    const auto parsed = kind_from_string(kind);
    if (!parsed)
        fail(path + ".kind", "expected 'aerial' or 'ground', got '" + kind + "'");
    spec.kind = *parsed;
    // default placement: a line along +x, 3 m apart
    spec.pose = j.contains("pose") ? read_pose(j["pose"], path + ".pose")
                                   : Pose{3.0 * static_cast<double>(index), 0.0, 0.0};
    return spec;
}

std::string format_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    // avoid "-0.000000" so equal poses always print identically
    if (std::string_view(buf) == "-0.000000")
        return "0.000000";
    return buf;
}

std::optional<double> median(std::vector<double> values)
{
    if (values.empty())
        return std::nullopt;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const double m = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    if (!std::isfinite(m))
        return std::nullopt;
    return m;
}

}  // namespace

Scenario parse_scenario(const json& doc)
{
    require_object(doc, "<root>");
    reject_unknown(doc, "", {"robots", "drop_prob", "comm_range", "step_period", "seed", "graph", "start_step",
                             "max_age", "barrier_timeout", "allocation", "membership", "step_cap", "output"});
    Scenario s;
    auto& w = s.world;

    if (!doc.contains("robots"))
        fail("robots", "missing required field");
    if (!doc["robots"].is_array())
        fail("robots", "expected an array");
    for (std::size_t i = 0; i < doc["robots"].size(); ++i)
        w.robots.push_back(parse_robot(doc["robots"][i], i));

    if (!doc.contains("drop_prob"))
        fail("drop_prob", "missing required field");
    w.drop_prob = read_number(doc, "drop_prob", "", 0.0);
    w.comm_range = read_number(doc, "comm_range", "", w.comm_range);
    w.step_period = read_number(doc, "step_period", "", w.step_period);
    w.seed = read_integer<std::uint64_t>(doc, "seed", "", w.seed);
    w.start_step = read_integer<Step>(doc, "start_step", "", w.start_step);
    w.max_age = read_integer<Step>(doc, "max_age", "", w.max_age);
    w.barrier_timeout = read_integer<int>(doc, "barrier_timeout", "", w.barrier_timeout);
    if (auto it = doc.find("membership"); it != doc.end()) {
        if (!it->is_boolean())
            fail("membership", "expected a boolean");
        w.membership = it->get<bool>();
    }
    s.step_cap = read_integer<Step>(doc, "step_cap", "", s.step_cap);
    if (s.step_cap < 1)
        fail("step_cap", "must be at least 1");

    if (!doc.contains("graph"))
        fail("graph", "missing required field");
    const auto& g = require_object(doc["graph"], "graph");
    reject_unknown(g, "graph", {"shape", "spacing", "nodes"});
    if (!g.contains("shape"))
        fail("graph.shape", "missing required field");
    const auto shape = read_string(g, "shape", "graph", "");
    const auto parsed_shape = shape_from_string(shape);
    if (!parsed_shape)
        fail("graph.shape", "expected 'L' or 'Y', got '" + shape + "'");
    w.graph.shape = *parsed_shape;
    w.graph.spacing = read_number(g, "spacing", "graph", w.graph.spacing);
    w.graph.nodes = read_integer<std::size_t>(g, "nodes", "graph", w.graph.nodes);

    if (auto it = doc.find("allocation"); it != doc.end()) {
        const auto& a = require_object(*it, "allocation");
        reject_unknown(a, "allocation", {"settle_steps", "orbit_factor", "ask_timeout", "grant_timeout",
                                         "arrival_tolerance", "parent_loss_factor"});
        w.alloc.settle_steps = read_integer<int>(a, "settle_steps", "allocation", w.alloc.settle_steps);
        w.alloc.orbit_factor = read_number(a, "orbit_factor", "allocation", w.alloc.orbit_factor);
        w.alloc.ask_timeout = read_integer<int>(a, "ask_timeout", "allocation", w.alloc.ask_timeout);
        w.alloc.grant_timeout = read_integer<int>(a, "grant_timeout", "allocation", w.alloc.grant_timeout);
        w.alloc.arrival_tolerance =
            read_number(a, "arrival_tolerance", "allocation", w.alloc.arrival_tolerance);
        w.alloc.parent_loss_factor =
            read_integer<int>(a, "parent_loss_factor", "allocation", w.alloc.parent_loss_factor);
    }

    if (auto it = doc.find("output"); it != doc.end()) {
        const auto& o = require_object(*it, "output");
        reject_unknown(o, "output", {"trace", "summary"});
        s.trace_file = read_string(o, "trace", "output", s.trace_file);
        s.summary_file = read_string(o, "summary", "output", s.summary_file);
    }

    try {
        validate(w);
    } catch (const std::invalid_argument& e) {
        throw ScenarioError(e.what());
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ScenarioError(path.string() + ": cannot open scenario file");
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ScenarioError(path.string() + ": " + e.what());
    }
    return parse_scenario(doc);
}

json to_json(const Scenario& s)
{
    const auto& w = s.world;
    json robots = json::array();
    for (const auto& r : w.robots)
        robots.push_back({{"id", r.id}, {"kind", to_string(r.kind)}, {"pose", {r.pose.x, r.pose.y, r.pose.z}}});
    return json{
        {"robots", robots},
        {"drop_prob", w.drop_prob},
        {"comm_range", w.comm_range},
        {"step_period", w.step_period},
        {"seed", w.seed},
        {"graph", {{"shape", to_string(w.graph.shape)}, {"spacing", w.graph.spacing}, {"nodes", w.graph.nodes}}},
        {"start_step", w.start_step},
        {"max_age", w.max_age},
        {"barrier_timeout", w.barrier_timeout},
        {"allocation",
         {{"settle_steps", w.alloc.settle_steps},
          {"orbit_factor", w.alloc.orbit_factor},
          {"ask_timeout", w.alloc.ask_timeout},
          {"grant_timeout", w.alloc.grant_timeout},
          {"arrival_tolerance", w.alloc.arrival_tolerance},
          {"parent_loss_factor", w.alloc.parent_loss_factor}}},
        {"membership", w.membership},
        {"step_cap", s.step_cap},
        {"output", {{"trace", s.trace_file}, {"summary", s.summary_file}}},
    };
}

json to_json(const Summary& s)
{
    json robots = json::array();
    for (const auto& r : s.robots) {
        json j{{"id", r.id},
               {"kind", to_string(r.kind)},
               {"final_state", to_string(r.final_state)},
               {"barrier_pass_steps", r.barrier_pass_steps}};
        j["label"] = r.label ? json(*r.label) : json(nullptr);
        j["parent"] = r.parent ? json(*r.parent) : json(nullptr);
        j["join_step"] = r.join_step ? json(*r.join_step) : json(nullptr);
        j["join_time"] = r.join_time ? json(*r.join_time) : json(nullptr);
        robots.push_back(std::move(j));
    }
    json ratios = json::object();
    for (const auto& [state, ratio] : s.neighbor_ratios)
        ratios[to_string(state)] = ratio;
    return json{{"seed", s.seed},
                {"drop_prob", s.drop_prob},
                {"step_period", s.step_period},
                {"completed", s.completed},
                {"total_steps", s.total_steps},
                {"completion_time", s.completion_time},
                {"robots", robots},
                {"max_bandwidth_ratio", s.max_bandwidth_ratio},
                {"neighbor_ratios", ratios},
                {"max_queue_length", s.max_queue_length},
                {"labels_unique", s.labels_unique},
                {"assignment_consistent", s.assignment_consistent},
                {"tree_consistent", s.tree_consistent}};
}

namespace {

void check_labels(const World& world, Summary& summary)
{
    std::map<RobotId, Label> label_of;
    std::set<Label> seen;
    for (const auto& r : world.robots()) {
        const auto& st = r.behavior().state();
        if (!st.my_label)
            continue;
        label_of[r.id()] = *st.my_label;
        if (!seen.insert(*st.my_label).second)
            summary.labels_unique = false;
    }
    // every replica: injective label -> robot map that agrees with the robots' own labels
    for (const auto& r : world.robots()) {
        const auto* table = r.stigmergy().find(kAssignmentTable);
        if (!table)
            continue;
        std::set<std::int32_t> robots_seen;
        for (const auto& [key, entry] : table->entries()) {
            const auto* label = std::get_if<std::uint16_t>(&key);
            const auto* robot = std::get_if<std::int32_t>(&entry.value);
            if (!label || !robot || !robots_seen.insert(*robot).second) {
                summary.assignment_consistent = false;
                continue;
            }
            auto it = label_of.find(static_cast<RobotId>(*robot));
            if (summary.completed && (it == label_of.end() || it->second != *label))
                summary.assignment_consistent = false;
        }
    }
    const auto& graph = world.graph();
    for (const auto& r : world.robots()) {
        const auto& st = r.behavior().state();
        if (!st.my_label || *st.my_label == 0)
            continue;
        auto parent = st.parent ? label_of.find(*st.parent) : label_of.end();
        if (parent == label_of.end() || parent->second != graph.parent_label(*st.my_label))
            summary.tree_consistent = false;
    }
}

}  // namespace

RunResult run_world(const Scenario& scenario)
{
    World world(scenario.world);
    RunResult result;
    auto& trace = result.trace;
    trace.reserve(static_cast<std::size_t>(std::min<Step>(scenario.step_cap, 4000)) * world.robots().size());

    bool completed = false;
    while (world.now() < scenario.step_cap) {
        auto rows = world.step();
        for (const auto& row : rows)
            if (row.bytes_out > kFrameCapacity)
                throw std::logic_error("frame budget exceeded by robot " + std::to_string(row.robot));
        trace.insert(trace.end(), rows.begin(), rows.end());
        if (world.formation_complete()) {
            completed = true;
            break;
        }
    }

    auto& s = result.summary;
    const auto& cfg = world.config();
    s.seed = cfg.seed;
    s.drop_prob = cfg.drop_prob;
    s.step_period = cfg.step_period;
    s.completed = completed;
    s.total_steps = world.now();
    s.completion_time = static_cast<double>(world.now()) * cfg.step_period;
    s.max_queue_length = world.max_queue_length();

    std::map<RobotId, Step> first_joined;
    for (const auto& row : trace)
        if (row.state == FsmState::Joined)
            first_joined.emplace(row.robot, row.step);
    for (const auto& r : world.robots()) {
        const auto& st = r.behavior().state();
        RobotSummary rs;
        rs.id = r.id();
        rs.kind = r.body().kind;
        rs.final_state = st.fsm;
        rs.label = st.my_label;
        rs.parent = st.parent;
        if (auto it = first_joined.find(r.id()); it != first_joined.end()) {
            rs.join_step = it->second;
            rs.join_time = static_cast<double>(it->second) * cfg.step_period;
        }
        for (const auto& [state, step] : st.barrier_passes)
            rs.barrier_pass_steps.push_back(step);
        s.robots.push_back(std::move(rs));
    }
    s.max_bandwidth_ratio = max_moving_average(bandwidth_moving_average(trace));
    if (world.robots().size() >= 2)
        s.neighbor_ratios = neighbor_ratio_by_state(trace, world.robots().size());
    check_labels(world, s);
    return result;
}

RunResult run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir)
{
    auto result = run_world(scenario);
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream os(out_dir / scenario.trace_file);
        if (!os)
            throw std::runtime_error("cannot write " + (out_dir / scenario.trace_file).string());
        write_trace(os, result.trace);
    }
    std::ofstream os(out_dir / scenario.summary_file);
    if (!os)
        throw std::runtime_error("cannot write " + (out_dir / scenario.summary_file).string());
    os << to_json(result.summary).dump(2) << '\n';
    return result;
}

void write_trace(std::ostream& os, std::span<const TraceRow> rows)
{
    os << "step,robot,state,x,y,z,bytes_out,records_in,neighbor_msgs_in\n";
    for (const auto& r : rows) {
        if (r.bytes_out > kFrameCapacity)
            throw std::logic_error("trace row exceeds the frame budget");
        os << r.step << ',' << r.robot << ',' << to_string(r.state) << ',' << format_double(r.x) << ','
           << format_double(r.y) << ',' << format_double(r.z) << ',' << r.bytes_out << ',' << r.records_in << ','
           << r.neighbor_msgs_in << '\n';
    }
}

std::vector<TraceRow> read_trace(std::istream& is)
{
    std::vector<TraceRow> rows;
    std::string line;
    if (!std::getline(is, line) || line.rfind("step,robot,state", 0) != 0)
        throw std::runtime_error("trace: missing header row");
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        for (std::string col; std::getline(ss, col, ',');)
            cols.push_back(col);
        if (cols.size() != 9)
            throw std::runtime_error("trace line " + std::to_string(lineno) + ": expected 9 columns");
        try {
            TraceRow r;
            r.step = std::stoll(cols[0]);
            r.robot = static_cast<RobotId>(std::stoul(cols[1]));
            const auto state = fsm_from_string(cols[2]);
            if (!state)
                throw std::invalid_argument("unknown state " + cols[2]);
            r.state = *state;
            r.x = std::stod(cols[3]);
            r.y = std::stod(cols[4]);
            r.z = std::stod(cols[5]);
            r.bytes_out = std::stoul(cols[6]);
            r.records_in = std::stoul(cols[7]);
            r.neighbor_msgs_in = std::stoul(cols[8]);
            rows.push_back(r);
        } catch (const std::exception& e) {
            throw std::runtime_error("trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

std::map<FsmState, double> neighbor_ratio_by_state(std::span<const TraceRow> trace, std::size_t swarm_size)
{
    if (swarm_size < 2)
        throw std::invalid_argument("neighbor_ratio_by_state: swarm size must be at least 2");
    std::map<FsmState, std::pair<double, std::size_t>> acc;
    for (const auto& row : trace) {
        if (row.step == 0)
            continue;
        auto& [sum, count] = acc[row.state];
        sum += static_cast<double>(row.neighbor_msgs_in) / static_cast<double>(swarm_size - 1);
        ++count;
    }
    std::map<FsmState, double> out;
    for (const auto& [state, a] : acc)
        out[state] = a.first / static_cast<double>(a.second);
    return out;
}

std::map<RobotId, std::vector<double>> bandwidth_moving_average(std::span<const TraceRow> trace,
                                                                std::size_t window)
{
    if (window == 0)
        throw std::invalid_argument("bandwidth_moving_average: window must be at least 1");
    std::map<RobotId, std::vector<double>> samples;
    for (const auto& row : trace)
        samples[row.robot].push_back(static_cast<double>(row.bytes_out) / static_cast<double>(kFrameCapacity));

    std::map<RobotId, std::vector<double>> out;
    for (const auto& [robot, xs] : samples) {
        auto& avg = out[robot];
        avg.reserve(xs.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sum += xs[i];
            if (i >= window)
                sum -= xs[i - window];
            avg.push_back(sum / static_cast<double>(std::min(i + 1, window)));
        }
    }
    return out;
}

double max_moving_average(const std::map<RobotId, std::vector<double>>& series)
{
    double best = 0.0;
    for (const auto& [robot, xs] : series)
        for (double v : xs)
            best = std::max(best, v);
    return best;
}

SweepResult sweep_droprate(const Scenario& scenario, std::span<const double> rates,
                           std::span<const std::uint64_t> seeds, unsigned threads)
{
    for (double r : rates)
        if (!(r >= 0.0 && r <= 1.0))
            throw std::invalid_argument("sweep: drop rate " + std::to_string(r) + " outside [0, 1]");

    SweepResult result;
    for (double rate : rates)
        for (auto seed : seeds)
            result.runs.push_back(SweepRun{rate, seed});

    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, result.runs.size())));

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < result.runs.size(); i = next++) {
            auto& run = result.runs[i];
            Scenario s = scenario;
            s.world.drop_prob = run.rate;
            s.world.seed = run.seed;
            const auto r = run_world(s);
            run.completed = r.summary.completed;
            run.total_steps = r.summary.total_steps;
            run.completion_time = r.summary.completion_time;
            run.max_bandwidth_ratio = r.summary.max_bandwidth_ratio;
            run.labels_unique = r.summary.labels_unique;
            run.assignment_consistent = r.summary.assignment_consistent;
            run.max_bytes_ok = std::all_of(r.trace.begin(), r.trace.end(),
                                           [](const TraceRow& row) { return row.bytes_out <= kFrameCapacity; });
        }
    };
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back(worker);
    pool.clear();

    for (double rate : rates) {
        SweepRate agg;
        agg.rate = rate;
        std::vector<double> times;
        std::size_t done = 0;
        for (const auto& run : result.runs) {
            if (run.rate != rate)
                continue;
            ++agg.runs;
            done += run.completed;
            times.push_back(run.completed ? run.completion_time : std::numeric_limits<double>::infinity());
        }
        agg.completion_ratio = agg.runs ? static_cast<double>(done) / static_cast<double>(agg.runs) : 0.0;
        agg.median_completion_time = median(std::move(times));
        result.rates.push_back(agg);
    }
    return result;
}

void write_sweep_runs(std::ostream& os, const SweepResult& result)
{
    os << "rate,seed,completed,total_steps,completion_time,max_bandwidth_ratio,labels_unique\n";
    for (const auto& r : result.runs)
        os << r.rate << ',' << r.seed << ',' << (r.completed ? 1 : 0) << ',' << r.total_steps << ','
           << format_double(r.completion_time) << ',' << format_double(r.max_bandwidth_ratio) << ','
           << (r.labels_unique ? 1 : 0) << '\n';
}

void write_sweep_rates(std::ostream& os, const SweepResult& result)
{
    os << "rate,runs,completion_ratio,median_completion_time\n";
    for (const auto& r : result.rates) {
        os << r.rate << ',' << r.runs << ',' << format_double(r.completion_ratio) << ',';
        if (r.median_completion_time)
            os << format_double(*r.median_completion_time);
        else
            os << "inf";
        os << '\n';
    }
}

}  // namespace stigsim
