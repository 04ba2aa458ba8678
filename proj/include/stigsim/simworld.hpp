#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stigsim/allocation.hpp"
#include "stigsim/comms.hpp"
#include "stigsim/membership.hpp"
#include "stigsim/stigmergy.hpp"

namespace stigsim {

enum class RobotKind : std::uint8_t { Aerial, Ground };

const char* to_string(RobotKind k);
std::optional<RobotKind> kind_from_string(std::string_view s);

inline constexpr SwarmId kAerialSwarm = 0;
inline constexpr SwarmId kGroundSwarm = 1;

struct RobotBody {
    RobotId id = 0;
    RobotKind kind = RobotKind::Aerial;
    Pose pose;
    std::optional<Pose> waypoint;
    double max_speed = 2.0;
    double cruise_altitude = 10.0;
    double climb_rate = 1.0;

    static RobotBody make(RobotId id, RobotKind kind, Pose pose);
};

/// Point-mass motion toward the command's waypoint. Aerial bodies settle
/// altitude first, then move laterally; ground bodies stay on z = 0. Motion
/// never overshoots the waypoint.
Pose kinematics_step(const RobotBody& body, const MotionCommand& command, double dt);

struct RobotSpec {
    RobotId id = 0;
    RobotKind kind = RobotKind::Aerial;
    Pose pose;

    bool operator==(const RobotSpec&) const = default;
};

struct GraphSpec {
    GraphShape shape = GraphShape::Y;
    double spacing = 5.0;
    std::size_t nodes = 0;  // 0: one node per robot

    bool operator==(const GraphSpec&) const = default;
};

struct WorldConfig {
    std::vector<RobotSpec> robots;
    double drop_prob = 0.0;
    double comm_range = 200.0;
    double step_period = 0.1;
    std::uint64_t seed = 1;
    GraphSpec graph;
    Step start_step = 0;
    Step max_age = NeighborTable::kDefaultMaxAge;
    int barrier_timeout = kBarrierTimeout;
    AllocParams alloc;
    bool membership = true;

    bool operator==(const WorldConfig&) const = default;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const WorldConfig& config);

struct Inbox {
    std::vector<Envelope> envelopes;
    std::vector<Record> injected;
};

struct StepOutput {
    Envelope envelope;
    MotionCommand motion;
    std::size_t envelopes_in = 0;
    std::size_t records_in = 0;
};

/// One robot: body plus the full per-robot runtime.
class Robot {
  public:
    Robot(const RobotSpec& spec, const WorldConfig& config, const FormationGraph& graph);

    RobotId id() const noexcept { return body_.id; }
    const RobotBody& body() const noexcept { return body_; }
    RobotBody& body() noexcept { return body_; }
    const StigmergyStore& stigmergy() const noexcept { return stig_; }
    StigmergyStore& stigmergy() noexcept { return stig_; }
    const NeighborTable& neighbors() const noexcept { return neighbors_; }
    const SwarmView& swarms() const noexcept { return swarms_; }
    const FormationBehavior& behavior() const noexcept { return behavior_; }
    FormationBehavior& behavior() noexcept { return behavior_; }
    const OutboundQueue& queue() const noexcept { return queue_; }
    FsmState fsm() const noexcept { return behavior_.state().fsm; }

    /// Five phases: dispatch inbox, refresh sensors, control, assemble frame, emit motion.
    StepOutput step(const Inbox& inbox, Step now);

  private:
    void dispatch(RobotId sender, const Record& record, Step now);
    void enqueue(Record record);

    RobotBody body_;
    std::size_t swarm_size_;
    double step_period_;
    bool membership_;
    StigmergyStore stig_;
    NeighborTable neighbors_;
    SwarmView swarms_;
    FormationBehavior behavior_;
    OutboundQueue queue_;
};

/// Uniform draw in [0, 1) built from the top 53 bits of the generator.
double uniform01(std::mt19937_64& rng);

/// Range-gated Bernoulli broadcast. `sent` holds one envelope per robot in
/// ascending id order; one draw per (sender, receiver) pair within range, in
/// that order. Returns the envelopes each robot receives next step.
std::vector<std::vector<Envelope>> channel_step(const std::vector<Envelope>& sent, double drop_prob,
                                                double comm_range, std::mt19937_64& rng);

struct TraceRow {
    Step step = 0;
    RobotId robot = 0;
    FsmState state = FsmState::TurnedOff;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    std::size_t bytes_out = 0;
    std::size_t records_in = 0;
    std::size_t neighbor_msgs_in = 0;

    bool operator==(const TraceRow&) const = default;
};

class World {
  public:
    explicit World(WorldConfig config);

    const WorldConfig& config() const noexcept { return config_; }
    const FormationGraph& graph() const noexcept { return graph_; }
    Step now() const noexcept { return step_; }
    const std::vector<Robot>& robots() const noexcept { return robots_; }
    std::vector<Robot>& robots() noexcept { return robots_; }
    const Robot& robot(RobotId id) const;

    /// Lowest-id robot; receives the mission start order.
    RobotId stakeholder() const { return robots_.front().id(); }

    void inject(RobotId id, Record record);

    /// Advances one step and returns one trace row per robot.
    std::vector<TraceRow> step();

    bool all_in(FsmState state) const;
    /// Every label is held and every label holder is locked.
    bool formation_complete() const;
    std::size_t max_queue_length() const noexcept { return max_queue_; }

  private:
    std::size_t index_of(RobotId id) const;

    WorldConfig config_;
    FormationGraph graph_;
    std::vector<Robot> robots_;
    std::vector<Inbox> inboxes_;
    std::mt19937_64 rng_;
    Step step_ = 0;
    std::size_t max_queue_ = 0;
};

}  // namespace stigsim
