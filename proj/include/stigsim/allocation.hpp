#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "stigsim/barrier.hpp"
#include "stigsim/comms.hpp"
#include "stigsim/records.hpp"
#include "stigsim/stigmergy.hpp"

namespace stigsim {

/// Stigmergy table holding the label -> robot assignments.
inline constexpr TableId kAssignmentTable = 100;

enum class FsmState : std::uint8_t { TurnedOff, TakeOff, BarrierA, Free, Asking, Joining, Joined, BarrierB, Lock };

inline constexpr std::size_t kFsmStateCount = 9;

const char* to_string(FsmState s);
std::optional<FsmState> fsm_from_string(std::string_view s);
bool holds_label(FsmState s);

/// Edges of the formation state machine. Staying in a state is always allowed.
bool is_allowed_transition(FsmState from, FsmState to);

struct GraphNode {
    Pose offset;
    std::vector<Label> predecessors;
};

class GraphError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Formation topology: label -> target offset relative to the root and the
/// predecessor labels. The first predecessor is the node's parent, the robot
/// that grants it.
class FormationGraph {
  public:
    FormationGraph() = default;
    FormationGraph(std::map<Label, GraphNode> nodes, double spacing);

    const GraphNode& node(Label label) const;
    bool contains(Label label) const { return nodes_.contains(label); }
    std::size_t size() const noexcept { return nodes_.size(); }
    const std::map<Label, GraphNode>& nodes() const noexcept { return nodes_; }
    double spacing() const noexcept { return spacing_; }

    Label parent_label(Label label) const;
    /// Labels whose parent is `label`, ascending.
    std::vector<Label> successors(Label label) const;

  private:
    std::map<Label, GraphNode> nodes_;
    double spacing_ = 1.0;
};

enum class GraphShape { L, Y };

std::optional<GraphShape> shape_from_string(std::string_view s);
const char* to_string(GraphShape s);

FormationGraph graph_generate(GraphShape shape, std::size_t n, double spacing);

/// Target of a robot given its parent's position and both labels.
Pose compute_target(const Pose& parent_pose, Label parent_label, Label my_label, const FormationGraph& graph,
                    double altitude);

struct AllocParams {
    int settle_steps = 20;
    double orbit_factor = 1.5;
    int ask_timeout = 50;
    int grant_timeout = 100;
    double arrival_tolerance = 0.5;
    // parent considered lost after max_age * this many silent steps
    int parent_loss_factor = 3;

    bool operator==(const AllocParams&) const = default;
};

/// Waypoint for the body; no waypoint means hold position.
struct MotionCommand {
    std::optional<Pose> waypoint;

    bool operator==(const MotionCommand&) const = default;
};

/// What the behavior sees of its robot during one control step.
struct RobotContext {
    RobotId self = 0;
    Step now = 0;
    Pose pose;
    bool aerial = true;
    double cruise_altitude = 10.0;
    double max_step = 0.2;  // meters per step
    std::size_t swarm_size = 1;
    const NeighborTable* neighbors = nullptr;
    StigmergyStore* stig = nullptr;
};

struct AskTarget {
    Label label = 0;
    RobotId advertiser = 0;
};

enum class SlotStatus { Open, Granted, Taken };

struct ChildSlot {
    SlotStatus status = SlotStatus::Open;
    RobotId robot = 0;
    int silent_steps = 0;
};

struct PeerStatus {
    FsmState state = FsmState::TurnedOff;
    std::optional<Label> label;
    std::optional<RobotId> root;
    Step seen = 0;
};

struct Advert {
    std::vector<Label> labels;
    Label advertiser_label = 0;
    Step seen = 0;
};

struct AllocState {
    FsmState fsm = FsmState::TurnedOff;
    std::optional<Label> my_label;
    std::optional<RobotId> parent;
    std::optional<AskTarget> ask_target;
    int ask_timer = 0;
    int ask_attempts = 0;

    bool started = false;
    bool barrier_passed = false;
    bool claim_pending = false;
    int claim_timer = 0;

    std::optional<Pose> target;
    bool parent_lost = false;
    std::optional<Pose> last_formation_pose;

    std::map<Label, ChildSlot> children;
    std::map<RobotId, PeerStatus> peers;
    std::map<RobotId, Advert> adverts;

    BarrierState barrier;
    std::vector<std::pair<FsmState, Step>> barrier_passes;
};

/// The task-allocation behavior of one robot.
///
/// Records addressed to the behavior are handed in through the on_* calls
/// during dispatch; control_step then runs the state machine once and clears
/// the per-step inbox. Outbound allocation records accumulate in outbox().
class FormationBehavior {
  public:
    FormationBehavior(RobotId self, FormationGraph graph, AllocParams params = {}, int barrier_timeout = kBarrierTimeout);

    RobotId self() const noexcept { return self_; }
    const FormationGraph& graph() const noexcept { return graph_; }
    const AllocParams& params() const noexcept { return params_; }
    const AllocState& state() const noexcept { return st_; }
    AllocState& state() noexcept { return st_; }

    void on_start() { st_.started = true; }
    void on_status(RobotId sender, const StatusRecord& status, Step now);
    void on_alloc(RobotId sender, const AllocRecord& record, Step now);
    void heard(RobotId sender) { heard_.insert(sender); }

    MotionCommand control_step(RobotContext& ctx);

    void claim_root(RobotContext& ctx);
    MotionCommand free_step(RobotContext& ctx);
    void asking_step(RobotContext& ctx);
    void grant_step(RobotContext& ctx);
    MotionCommand joining_step(RobotContext& ctx);
    void completion_step(RobotContext& ctx);

    /// Open labels this robot may ask for right now, ascending by label.
    std::vector<AskTarget> open_candidates(const RobotContext& ctx) const;

    StatusRecord status(const StigmergyStore& stig) const;

    const std::vector<Record>& outbox() const noexcept { return outbox_; }
    std::vector<Record> take_outbox() { return std::exchange(outbox_, {}); }

    std::size_t barrier_a_threshold(std::size_t swarm_size) const;
    std::size_t barrier_b_threshold(std::size_t swarm_size) const;

  private:
    void transition(FsmState to);
    MotionCommand takeoff_step(RobotContext& ctx);
    void barrier_a_step(RobotContext& ctx);
    void settle_claim(RobotContext& ctx);
    void barrier_b_step(RobotContext& ctx);
    void become_joined(RobotContext& ctx);
    void go_free();
    MotionCommand orbit_command(const RobotContext& ctx);
    std::optional<RobotId> holder_of(Label label) const;
    bool label_evidence(Label label, RobotId robot, const StigmergyStore& stig) const;
    std::optional<RobotId> any_holder_evidence(Label label, const StigmergyStore& stig) const;
    double altitude(const RobotContext& ctx) const { return ctx.aerial ? ctx.cruise_altitude : 0.0; }

    RobotId self_;
    FormationGraph graph_;
    AllocParams params_;
    AllocState st_;

    std::vector<std::pair<RobotId, AllocRecord>> inbox_;
    std::set<RobotId> heard_;
    std::vector<Record> outbox_;
};

class TransitionError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

}  // namespace stigsim
