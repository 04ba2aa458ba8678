#include "stigsim/allocation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

namespace stigsim {

namespace {

constexpr std::array<const char*, kFsmStateCount> kStateNames = {
    "TurnedOff", "TakeOff", "BarrierA", "Free", "Asking", "Joining", "Joined", "BarrierB", "Lock"};

std::optional<std::int32_t> int_value(const StigmergyStore& stig, TableId table, Label key)
{
    const auto* t = stig.find(table);
    if (!t)
        return std::nullopt;
    const auto* e = t->find(int_key(key));
    if (!e)
        return std::nullopt;
    if (const auto* v = std::get_if<std::int32_t>(&e->value))
        return *v;
    return std::nullopt;
}

}  // namespace

const char* to_string(FsmState s)
{
    return kStateNames[static_cast<std::size_t>(s)];
}

std::optional<FsmState> fsm_from_string(std::string_view s)
{
    for (std::size_t i = 0; i < kStateNames.size(); ++i)
        if (s == kStateNames[i])
            return static_cast<FsmState>(i);
    return std::nullopt;
}

bool holds_label(FsmState s)
{
    return s == FsmState::Joining || s == FsmState::Joined || s == FsmState::BarrierB || s == FsmState::Lock;
}

bool is_allowed_transition(FsmState from, FsmState to)
{
    using S = FsmState;
    if (from == to)
        return true;
    switch (from) {
    case S::TurnedOff: return to == S::TakeOff;
    case S::TakeOff: return to == S::BarrierA;
    case S::BarrierA: return to == S::Free || to == S::Joined;  // Joined: root election winner
    case S::Free: return to == S::Asking;
    case S::Asking: return to == S::Free || to == S::Joining;
    case S::Joining: return to == S::Joined;
    case S::Joined: return to == S::BarrierB;
    case S::BarrierB: return to == S::Lock;
    case S::Lock: return false;
    }
    return false;
}

FormationGraph::FormationGraph(std::map<Label, GraphNode> nodes, double spacing)
    : nodes_(std::move(nodes)), spacing_(spacing)
{
    auto root = nodes_.find(0);
    if (root == nodes_.end())
        throw GraphError("formation graph: label 0 missing");
    if (!root->second.predecessors.empty())
        throw GraphError("formation graph: label 0 must not have predecessors");
    for (const auto& [label, node] : nodes_) {
        if (label == 0)
            continue;
        if (node.predecessors.empty() || node.predecessors.size() > 2)
            throw GraphError("formation graph: label " + std::to_string(label) + " needs 1 or 2 predecessors");
        for (Label p : node.predecessors)
            if (!nodes_.contains(p))
                throw GraphError("formation graph: label " + std::to_string(label) + " references missing label " +
                                 std::to_string(p));
    }
    // every node must reach the root through predecessor links without a cycle
    enum class Mark { None, Active, Done };
    std::map<Label, Mark> mark;
    std::function<void(Label)> visit = [&](Label label) {
        auto& m = mark[label];
        if (m == Mark::Done)
            return;
        if (m == Mark::Active)
            throw GraphError("formation graph: predecessor cycle through label " + std::to_string(label));
        m = Mark::Active;
        for (Label p : nodes_.at(label).predecessors)
            visit(p);
        m = Mark::Done;
    };
    for (const auto& [label, node] : nodes_)
        visit(label);
}

const GraphNode& FormationGraph::node(Label label) const
{
    auto it = nodes_.find(label);
    if (it == nodes_.end())
        throw GraphError("formation graph: unknown label " + std::to_string(label));
    return it->second;
}

Label FormationGraph::parent_label(Label label) const
{
    const auto& n = node(label);
    return n.predecessors.empty() ? label : n.predecessors.front();
}

std::vector<Label> FormationGraph::successors(Label label) const
{
    std::vector<Label> out;
    for (const auto& [l, n] : nodes_)
        if (!n.predecessors.empty() && n.predecessors.front() == label)
            out.push_back(l);
    return out;
}

std::optional<GraphShape> shape_from_string(std::string_view s)
{
    if (s == "L")
        return GraphShape::L;
    if (s == "Y")
        return GraphShape::Y;
    return std::nullopt;
}

const char* to_string(GraphShape s)
{
    return s == GraphShape::L ? "L" : "Y";
}

FormationGraph graph_generate(GraphShape shape, std::size_t n, double spacing)
{
    if (n == 0)
        throw GraphError("graph_generate: at least one node required");
    if (!(spacing > 0.0))
        throw GraphError("graph_generate: spacing must be positive");
    if (n > kNoLabel)
        throw GraphError("graph_generate: too many nodes");

    std::vector<double> azimuths;
    if (shape == GraphShape::L)
        azimuths = {0.0, 90.0};
    else
        azimuths = {90.0, 210.0, 330.0};

    std::map<Label, GraphNode> nodes;
    nodes[0] = GraphNode{Pose{}, {}};
    std::vector<Label> branch_tip(azimuths.size(), 0);
    std::vector<int> branch_len(azimuths.size(), 0);
    for (std::size_t i = 1; i < n; ++i) {
        const std::size_t b = (i - 1) % azimuths.size();
        const double rad = azimuths[b] * std::numbers::pi / 180.0;
        const double dist = spacing * ++branch_len[b];
        double x = dist * std::cos(rad);
        double y = dist * std::sin(rad);
        // exact zeros on axis-aligned branches
        if (std::abs(x) < 1e-12)
            x = 0.0;
        if (std::abs(y) < 1e-12)
            y = 0.0;
        const auto label = static_cast<Label>(i);
        nodes[label] = GraphNode{Pose{x, y, 0.0}, {branch_tip[b]}};
        branch_tip[b] = label;
    }
    return FormationGraph(std::move(nodes), spacing);
}

Pose compute_target(const Pose& parent_pose, Label parent_label, Label my_label, const FormationGraph& graph,
                    double altitude)
{
    const Pose& mine = graph.node(my_label).offset;
    const Pose& theirs = graph.node(parent_label).offset;
    return Pose{parent_pose.x + (mine.x - theirs.x), parent_pose.y + (mine.y - theirs.y), altitude};
}

FormationBehavior::FormationBehavior(RobotId self, FormationGraph graph, AllocParams params, int barrier_timeout)
    : self_(self), graph_(std::move(graph)), params_(params)
{
    st_.barrier.timeout = barrier_timeout;
}

std::size_t FormationBehavior::barrier_a_threshold(std::size_t swarm_size) const
{
    return swarm_size == 0 ? 0 : swarm_size - 1;
}

std::size_t FormationBehavior::barrier_b_threshold(std::size_t swarm_size) const
{
    // robots left without a label never enter the completion barrier
    const std::size_t members = std::min(swarm_size, graph_.size());
    return members == 0 ? 0 : members - 1;
}

void FormationBehavior::on_status(RobotId sender, const StatusRecord& status, Step now)
{
    auto& peer = st_.peers[sender];
    peer.state = status.state < kFsmStateCount ? static_cast<FsmState>(status.state) : FsmState::TurnedOff;
    peer.label = status.label == kNoLabel ? std::nullopt : std::optional<Label>(status.label);
    peer.root = status.root == kNoLabel ? std::nullopt : std::optional<RobotId>(status.root);
    peer.seen = now;
    if (peer.state != FsmState::TurnedOff)
        st_.started = true;
}

void FormationBehavior::on_alloc(RobotId sender, const AllocRecord& record, Step now)
{
    if (const auto* open = std::get_if<OpenRecord>(&record)) {
        st_.adverts[open->advertiser] = Advert{open->labels, open->advertiser_label, now};
        return;
    }
    inbox_.emplace_back(sender, record);
}

StatusRecord FormationBehavior::status(const StigmergyStore& stig) const
{
    StatusRecord s;
    s.state = static_cast<std::uint8_t>(st_.fsm);
    if (st_.my_label)
        s.label = *st_.my_label;
    if (auto root = int_value(stig, kAssignmentTable, 0); root && *root >= 0 && *root < kNoLabel)
        s.root = static_cast<std::uint16_t>(*root);
    return s;
}

void FormationBehavior::transition(FsmState to)
{
    if (!is_allowed_transition(st_.fsm, to))
        throw TransitionError(std::string("illegal transition ") + to_string(st_.fsm) + " -> " + to_string(to));
    st_.fsm = to;
}

MotionCommand FormationBehavior::control_step(RobotContext& ctx)
{
    MotionCommand cmd;
    switch (st_.fsm) {
    case FsmState::TurnedOff:
        if (st_.started)
            transition(FsmState::TakeOff);
        break;
    case FsmState::TakeOff: cmd = takeoff_step(ctx); break;
    case FsmState::BarrierA: barrier_a_step(ctx); break;
    case FsmState::Free: cmd = free_step(ctx); break;
    case FsmState::Asking:
        asking_step(ctx);
        if (st_.fsm != FsmState::Joining)
            cmd = orbit_command(ctx);
        break;
    case FsmState::Joining: cmd = joining_step(ctx); break;
    case FsmState::Joined:
        grant_step(ctx);
        completion_step(ctx);
        break;
    case FsmState::BarrierB: barrier_b_step(ctx); break;
    case FsmState::Lock: break;
    }
    inbox_.clear();
    heard_.clear();
    return cmd;
}

MotionCommand FormationBehavior::takeoff_step(RobotContext& ctx)
{
    const double alt = altitude(ctx);
    if (ctx.pose.z >= alt) {
        transition(FsmState::BarrierA);
        barrier_create(st_.barrier, *ctx.stig);
        return {};
    }
    return MotionCommand{Pose{ctx.pose.x, ctx.pose.y, alt}};
}

void FormationBehavior::barrier_a_step(RobotContext& ctx)
{
    if (st_.claim_pending) {
        settle_claim(ctx);
        return;
    }
    if (st_.barrier_passed)
        return;
    switch (barrier_step(st_.barrier, *ctx.stig, self_, barrier_a_threshold(ctx.swarm_size))) {
    case BarrierOutcome::Proceed:
        st_.barrier_passed = true;
        st_.barrier_passes.emplace_back(FsmState::BarrierA, ctx.now);
        if (int_value(*ctx.stig, kAssignmentTable, 0))
            go_free();
        else
            claim_root(ctx);
        break;
    case BarrierOutcome::TimedOut:
        // retry; the table id is unchanged so the done flag held by peers still applies
        barrier_create(st_.barrier, *ctx.stig);
        break;
    case BarrierOutcome::Waiting: break;
    }
}

void FormationBehavior::claim_root(RobotContext& ctx)
{
    ctx.stig->put(kAssignmentTable, int_key(0), static_cast<std::int32_t>(self_));
    st_.claim_pending = true;
    st_.claim_timer = 0;
}

void FormationBehavior::settle_claim(RobotContext& ctx)
{
    ++st_.claim_timer;
    ctx.stig->rebroadcast(kAssignmentTable, int_key(0));
    if (st_.claim_timer < params_.settle_steps)
        return;
    const auto winner = int_value(*ctx.stig, kAssignmentTable, 0);
    if (!winner || *winner != self_) {
        st_.claim_pending = false;
        go_free();
        return;
    }
    // every peer must report this robot as root before it acts as one
    std::size_t acks = 0;
    for (const auto& [id, peer] : st_.peers)
        if (id != self_ && peer.root == self_)
            ++acks;
    if (acks + 1 < ctx.swarm_size)
        return;
    st_.claim_pending = false;
    st_.my_label = 0;
    transition(FsmState::Joined);
    become_joined(ctx);
}

void FormationBehavior::go_free()
{
    st_.ask_target.reset();
    st_.ask_timer = 0;
    transition(FsmState::Free);
}

void FormationBehavior::become_joined(RobotContext& ctx)
{
    const Label label = *st_.my_label;
    outbox_.emplace_back(AllocRecord{JoinedRecord{label, self_}});
    if (label != 0)
        ctx.stig->put(kAssignmentTable, int_key(label), static_cast<std::int32_t>(self_));
    st_.children.clear();
    for (Label child : graph_.successors(label))
        st_.children[child] = ChildSlot{};
}

std::optional<RobotId> FormationBehavior::holder_of(Label label) const
{
    for (const auto& [id, peer] : st_.peers)
        if (holds_label(peer.state) && peer.label == label)
            return id;
    return std::nullopt;
}

std::vector<AskTarget> FormationBehavior::open_candidates(const RobotContext& ctx) const
{
    const auto& neighbors = *ctx.neighbors;
    const Step max_age = neighbors.max_age();
    std::map<Label, RobotId> found;
    for (const auto& [advertiser, ad] : st_.adverts) {
        if (ctx.now - ad.seen > max_age || !neighbors.is_fresh(advertiser, ctx.now))
            continue;
        for (Label label : ad.labels) {
            if (!graph_.contains(label) || found.contains(label))
                continue;
            const auto& preds = graph_.node(label).predecessors;
            const bool visible = std::all_of(preds.begin(), preds.end(), [&](Label p) {
                const auto holder = p == ad.advertiser_label ? std::optional<RobotId>(advertiser) : holder_of(p);
                return holder && neighbors.is_fresh(*holder, ctx.now);
            });
            if (visible)
                found.emplace(label, advertiser);
        }
    }
    std::vector<AskTarget> out;
    for (const auto& [label, advertiser] : found)
        out.push_back(AskTarget{label, advertiser});
    return out;
}

MotionCommand FormationBehavior::free_step(RobotContext& ctx)
{
    for (const auto& [sender, rec] : inbox_) {
        // a grant that arrived after this robot gave up asking
        if (const auto* g = std::get_if<GrantRecord>(&rec); g && g->grantee == self_) {
            st_.ask_target = AskTarget{g->label, sender};
            st_.ask_timer = 0;
            transition(FsmState::Asking);
            return orbit_command(ctx);
        }
    }
    const auto candidates = open_candidates(ctx);
    if (!candidates.empty()) {
        const auto pick = (static_cast<std::size_t>(self_) + static_cast<std::size_t>(st_.ask_attempts)) %
                          candidates.size();
        st_.ask_target = candidates[pick];
        st_.ask_timer = 0;
        transition(FsmState::Asking);
        outbox_.emplace_back(AllocRecord{RequestRecord{st_.ask_target->label, self_}});
    }
    return orbit_command(ctx);
}

void FormationBehavior::asking_step(RobotContext& ctx)
{
    const Label wanted = st_.ask_target->label;
    bool lost = false;
    for (const auto& [sender, rec] : inbox_) {
        const auto* g = std::get_if<GrantRecord>(&rec);
        if (!g)
            continue;
        if (g->grantee == self_) {
            // stale grant for a label this robot already knows to be taken
            if (auto holder = any_holder_evidence(g->label, *ctx.stig); holder && *holder != self_) {
                lost = true;
                continue;
            }
            st_.my_label = g->label;
            st_.parent = sender;
            st_.ask_target.reset();
            st_.target.reset();
            transition(FsmState::Joining);
            return;
        }
        if (g->label == wanted)
            lost = true;
    }
    if (lost || ++st_.ask_timer >= params_.ask_timeout) {
        ++st_.ask_attempts;
        go_free();
        return;
    }
    outbox_.emplace_back(AllocRecord{RequestRecord{wanted, self_}});
}

bool FormationBehavior::label_evidence(Label label, RobotId robot, const StigmergyStore& stig) const
{
    if (auto it = st_.peers.find(robot); it != st_.peers.end() && holds_label(it->second.state) &&
                                          it->second.label == label)
        return true;
    for (const auto& [sender, rec] : inbox_)
        if (const auto* j = std::get_if<JoinedRecord>(&rec); j && j->label == label && j->robot == robot)
            return true;
    const auto assigned = int_value(stig, kAssignmentTable, label);
    return assigned && *assigned == robot;
}

std::optional<RobotId> FormationBehavior::any_holder_evidence(Label label, const StigmergyStore& stig) const
{
    for (const auto& [sender, rec] : inbox_)
        if (const auto* j = std::get_if<JoinedRecord>(&rec); j && j->label == label)
            return j->robot;
    if (auto holder = holder_of(label))
        return holder;
    if (auto assigned = int_value(stig, kAssignmentTable, label); assigned && *assigned >= 0)
        return static_cast<RobotId>(*assigned);
    return std::nullopt;
}

void FormationBehavior::grant_step(RobotContext& ctx)
{
    const auto& stig = *ctx.stig;
    for (auto& [label, slot] : st_.children) {
        if (slot.status == SlotStatus::Open) {
            if (auto holder = any_holder_evidence(label, stig)) {
                slot = ChildSlot{SlotStatus::Taken, *holder, 0};
            }
            continue;
        }
        if (slot.status != SlotStatus::Granted)
            continue;
        if (label_evidence(label, slot.robot, stig)) {
            slot.status = SlotStatus::Taken;
            continue;
        }
        const auto peer = st_.peers.find(slot.robot);
        const bool holds_other = peer != st_.peers.end() && holds_label(peer->second.state) &&
                                 peer->second.label && *peer->second.label != label;
        slot.silent_steps = heard_.contains(slot.robot) ? 0 : slot.silent_steps + 1;
        if (holds_other || slot.silent_steps >= params_.grant_timeout)
            slot = ChildSlot{};
    }

    // one new grant per step: lowest requested label, lowest requester id
    std::map<Label, RobotId> requests;
    for (const auto& [sender, rec] : inbox_) {
        const auto* r = std::get_if<RequestRecord>(&rec);
        if (!r)
            continue;
        auto slot = st_.children.find(r->label);
        if (slot == st_.children.end() || slot->second.status != SlotStatus::Open)
            continue;
        auto [it, inserted] = requests.emplace(r->label, r->requester);
        if (!inserted)
            it->second = std::min(it->second, r->requester);
    }
    if (!requests.empty()) {
        const auto& [label, requester] = *requests.begin();
        st_.children[label] = ChildSlot{SlotStatus::Granted, requester, 0};
    }

    std::vector<Label> open;
    for (const auto& [label, slot] : st_.children) {
        if (slot.status == SlotStatus::Granted)
            outbox_.emplace_back(AllocRecord{GrantRecord{label, slot.robot}});
        else if (slot.status == SlotStatus::Open)
            open.push_back(label);
    }
    if (!open.empty())
        outbox_.emplace_back(AllocRecord{OpenRecord{std::move(open), self_, *st_.my_label}});
}

MotionCommand FormationBehavior::joining_step(RobotContext& ctx)
{
    const Label label = *st_.my_label;
    const auto* parent = ctx.neighbors->find(*st_.parent);
    const Step lost_after = ctx.neighbors->max_age() * params_.parent_loss_factor;
    if (!parent || ctx.now - parent->last_seen > lost_after) {
        st_.parent_lost = true;
        return {};
    }
    st_.parent_lost = false;
    st_.target = compute_target(parent->pose, graph_.parent_label(label), label, graph_, altitude(ctx));
    if (distance(ctx.pose, *st_.target) <= params_.arrival_tolerance) {
        transition(FsmState::Joined);
        become_joined(ctx);
        return {};
    }
    return MotionCommand{*st_.target};
}

void FormationBehavior::completion_step(RobotContext& ctx)
{
    for (const auto& [label, node] : graph_.nodes())
        if (!ctx.stig->get(kAssignmentTable, int_key(label)))
            return;
    transition(FsmState::BarrierB);
    barrier_create(st_.barrier, *ctx.stig);
}

void FormationBehavior::barrier_b_step(RobotContext& ctx)
{
    switch (barrier_step(st_.barrier, *ctx.stig, self_, barrier_b_threshold(ctx.swarm_size))) {
    case BarrierOutcome::Proceed:
        st_.barrier_passes.emplace_back(FsmState::BarrierB, ctx.now);
        transition(FsmState::Lock);
        break;
    case BarrierOutcome::TimedOut: barrier_create(st_.barrier, *ctx.stig); break;
    case BarrierOutcome::Waiting: break;
    }
}

MotionCommand FormationBehavior::orbit_command(const RobotContext& ctx)
{
    std::optional<Pose> center;
    double best = 0.0;
    for (const auto& [id, peer] : st_.peers) {
        if (!holds_label(peer.state))
            continue;
        const auto* rec = ctx.neighbors->find(id);
        if (!rec)
            continue;
        const double d = planar_distance(ctx.pose, rec->pose);
        if (!center || d < best) {
            center = rec->pose;
            best = d;
        }
    }
    if (center)
        st_.last_formation_pose = center;
    else
        center = st_.last_formation_pose;
    if (!center)
        return {};

    const double radius = params_.orbit_factor * graph_.spacing();
    const double dx = ctx.pose.x - center->x;
    const double dy = ctx.pose.y - center->y;
    const double theta = std::hypot(dx, dy) > 1e-9 ? std::atan2(dy, dx) : 0.0;
    const double next = theta + ctx.max_step / radius;
    return MotionCommand{
        Pose{center->x + radius * std::cos(next), center->y + radius * std::sin(next), altitude(ctx)}};
}

}  // namespace stigsim
