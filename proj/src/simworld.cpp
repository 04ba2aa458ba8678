#include "stigsim/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <tuple>

namespace stigsim {

namespace {

double approach(double from, double to, double max_delta)
{
    const double d = to - from;
    if (std::abs(d) <= max_delta)
        return to;
    return from + std::copysign(max_delta, d);
}

Pose planar_approach(const Pose& from, const Pose& to, double max_delta)
{
    const double dx = to.x - from.x;
    const double dy = to.y - from.y;
    const double d = std::hypot(dx, dy);
    if (d <= max_delta)
        return Pose{to.x, to.y, from.z};
    const double s = max_delta / d;
    return Pose{from.x + dx * s, from.y + dy * s, from.z};
}

void require(bool ok, const std::string& what)
{
    if (!ok)
        throw std::invalid_argument(what);
}

template <class T>
bool same_put_version(const Record& queued, const T& put)
{
    const auto* q = std::get_if<PutRecord>(&queued);
    return q && q->table == put.table && q->entry.key == put.entry.key &&
           std::tie(q->entry.lamport, q->entry.writer) >= std::tie(put.entry.lamport, put.entry.writer);
}

}  // namespace

const char* to_string(RobotKind k)
{
    return k == RobotKind::Aerial ? "aerial" : "ground";
}

std::optional<RobotKind> kind_from_string(std::string_view s)
{
    if (s == "aerial")
        return RobotKind::Aerial;
    if (s == "ground")
        return RobotKind::Ground;
    return std::nullopt;
}

RobotBody RobotBody::make(RobotId id, RobotKind kind, Pose pose)
{
    RobotBody b;
    b.id = id;
    b.kind = kind;
    b.pose = pose;
    if (kind == RobotKind::Ground) {
        b.pose.z = 0.0;
        b.max_speed = 1.0;
        b.cruise_altitude = 0.0;
        b.climb_rate = 0.0;
    }
    return b;
}

Pose kinematics_step(const RobotBody& body, const MotionCommand& command, double dt)
{
    if (!(dt > 0.0))
        throw std::invalid_argument("kinematics_step: dt must be positive");
    Pose p = body.pose;
    if (body.kind == RobotKind::Ground)
        p.z = 0.0;
    if (!command.waypoint)
        return p;
    const Pose& target = *command.waypoint;
    if (body.kind == RobotKind::Ground)
        return planar_approach(p, target, body.max_speed * dt);
    if (p.z != target.z) {
        p.z = approach(p.z, target.z, body.climb_rate * dt);
        return p;
    }
    return planar_approach(p, target, body.max_speed * dt);
}

void validate(const WorldConfig& c)
{
    require(!c.robots.empty(), "robots: at least one robot required");
    std::set<RobotId> ids;
    for (std::size_t i = 0; i < c.robots.size(); ++i) {
        const auto& r = c.robots[i];
        const std::string at = "robots[" + std::to_string(i) + "]";
        require(r.id != kNoLabel, at + ".id: 65535 is reserved");
        require(ids.insert(r.id).second, at + ".id: duplicate robot id " + std::to_string(r.id));
        require(std::isfinite(r.pose.x) && std::isfinite(r.pose.y) && std::isfinite(r.pose.z),
                at + ".pose: coordinates must be finite");
    }
    require(c.drop_prob >= 0.0 && c.drop_prob <= 1.0, "drop_prob: must lie in [0, 1]");
    require(c.comm_range > 0.0, "comm_range: must be positive");
    require(c.step_period > 0.0, "step_period: must be positive");
    require(c.graph.spacing > 0.0, "graph.spacing: must be positive");
    require(c.graph.nodes <= c.robots.size(), "graph.nodes: more nodes than robots");
    require(c.start_step >= 0, "start_step: must be non-negative");
    require(c.max_age >= 0, "max_age: must be non-negative");
    require(c.barrier_timeout >= 1, "barrier_timeout: must be at least 1");
    require(c.alloc.settle_steps >= 1, "allocation.settle_steps: must be at least 1");
    require(c.alloc.orbit_factor > 0.0, "allocation.orbit_factor: must be positive");
    require(c.alloc.ask_timeout >= 1, "allocation.ask_timeout: must be at least 1");
    require(c.alloc.grant_timeout >= 1, "allocation.grant_timeout: must be at least 1");
    require(c.alloc.arrival_tolerance > 0.0, "allocation.arrival_tolerance: must be positive");
    require(c.alloc.parent_loss_factor >= 1, "allocation.parent_loss_factor: must be at least 1");
}

Robot::Robot(const RobotSpec& spec, const WorldConfig& config, const FormationGraph& graph)
    : body_(RobotBody::make(spec.id, spec.kind, spec.pose)),
      swarm_size_(config.robots.size()),
      step_period_(config.step_period),
      membership_(config.membership),
      stig_(spec.id),
      neighbors_(spec.id, config.max_age),
      swarms_(spec.id),
      behavior_(spec.id, graph, config.alloc, config.barrier_timeout),
      queue_(kFrameCapacity, header_size(config.membership))
{
    stig_.create(kAssignmentTable);
    swarms_.join(spec.kind == RobotKind::Aerial ? kAerialSwarm : kGroundSwarm);
}

void Robot::dispatch(RobotId sender, const Record& record, Step now)
{
    std::visit(
        [&](const auto& rec) {
            using T = std::decay_t<decltype(rec)>;
            if constexpr (std::is_same_v<T, PutRecord> || std::is_same_v<T, QueryRecord>)
                stig_.receive(rec);
            else if constexpr (std::is_same_v<T, AllocRecord>)
                behavior_.on_alloc(sender, rec, now);
            else if constexpr (std::is_same_v<T, StatusRecord>)
                behavior_.on_status(sender, rec, now);
            else if constexpr (std::is_same_v<T, StartRecord>)
                behavior_.on_start();
        },
        record);
}

void Robot::enqueue(Record record)
{
    // an equal or newer version of this key is already waiting for a frame
    if (const auto* put = std::get_if<PutRecord>(&record)) {
        const auto& q = queue_.records();
        if (std::any_of(q.begin(), q.end(), [&](const Record& r) { return same_put_version(r, *put); }))
            return;
    }
    queue_.enqueue(std::move(record));
}

StepOutput Robot::step(const Inbox& inbox, Step now)
{
    StepOutput out;

    // a) incoming messages
    for (const auto& rec : inbox.injected)
        dispatch(id(), rec, now);
    for (const auto& env : inbox.envelopes) {
        const auto records = neighbors_.on_envelope(env, now);
        if (env.membership)
            swarms_.observe(env.sender, *env.membership);
        behavior_.heard(env.sender);
        for (const auto& rec : records)
            dispatch(env.sender, rec, now);
        ++out.envelopes_in;
        out.records_in += records.size();
    }

    // b) sensors
    RobotContext ctx;
    ctx.self = id();
    ctx.now = now;
    ctx.pose = body_.pose;
    ctx.aerial = swarms_.in(kAerialSwarm, id());
    ctx.cruise_altitude = body_.cruise_altitude;
    ctx.max_step = body_.max_speed * step_period_;
    ctx.swarm_size = swarm_size_;
    ctx.neighbors = &neighbors_;
    ctx.stig = &stig_;

    // c) control
    out.motion = behavior_.control_step(ctx);

    // d) outgoing messages
    enqueue(behavior_.status(stig_));
    for (auto& rec : behavior_.take_outbox())
        enqueue(std::move(rec));
    for (auto& rec : stig_.take_outbox())
        enqueue(to_record(std::move(rec)));
    out.envelope = assemble_frame(id(), body_.pose, queue_,
                                  membership_ ? std::optional<std::uint16_t>(swarms_.bitmap()) : std::nullopt);

    // e) actuation is applied by the world after every robot has stepped
    return out;
}

double uniform01(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<std::vector<Envelope>> channel_step(const std::vector<Envelope>& sent, double drop_prob,
                                                double comm_range, std::mt19937_64& rng)
{
    std::vector<std::vector<Envelope>> inboxes(sent.size());
    for (std::size_t s = 0; s < sent.size(); ++s) {
        for (std::size_t r = 0; r < sent.size(); ++r) {
            if (r == s || distance(sent[s].pose, sent[r].pose) > comm_range)
                continue;
            if (uniform01(rng) >= drop_prob)
                inboxes[r].push_back(sent[s]);
        }
    }
    return inboxes;
}

World::World(WorldConfig config) : config_(std::move(config)), rng_(config_.seed)
{
    validate(config_);
    std::sort(config_.robots.begin(), config_.robots.end(),
              [](const RobotSpec& a, const RobotSpec& b) { return a.id < b.id; });
    const std::size_t nodes = config_.graph.nodes == 0 ? config_.robots.size() : config_.graph.nodes;
    graph_ = graph_generate(config_.graph.shape, nodes, config_.graph.spacing);
    robots_.reserve(config_.robots.size());
    for (const auto& spec : config_.robots)
        robots_.emplace_back(spec, config_, graph_);
    inboxes_.resize(robots_.size());
}

std::size_t World::index_of(RobotId id) const
{
    auto it = std::lower_bound(robots_.begin(), robots_.end(), id,
                               [](const Robot& r, RobotId v) { return r.id() < v; });
    if (it == robots_.end() || it->id() != id)
        throw std::out_of_range("no robot with id " + std::to_string(id));
    return static_cast<std::size_t>(it - robots_.begin());
}

const Robot& World::robot(RobotId id) const
{
    return robots_[index_of(id)];
}

void World::inject(RobotId id, Record record)
{
    inboxes_[index_of(id)].injected.push_back(std::move(record));
}

std::vector<TraceRow> World::step()
{
    if (step_ == config_.start_step)
        inject(stakeholder(), StartRecord{});

    std::vector<Envelope> sent;
    std::vector<MotionCommand> motions;
    std::vector<TraceRow> rows;
    sent.reserve(robots_.size());
    motions.reserve(robots_.size());
    rows.reserve(robots_.size());
    for (std::size_t i = 0; i < robots_.size(); ++i) {
        auto& robot = robots_[i];
        auto out = robot.step(inboxes_[i], step_);
        const Pose& p = robot.body().pose;
        rows.push_back(TraceRow{step_, robot.id(), robot.fsm(), p.x, p.y, p.z, out.envelope.byte_size,
                                out.records_in, out.envelopes_in});
        max_queue_ = std::max(max_queue_, robot.queue().size());
        sent.push_back(std::move(out.envelope));
        motions.push_back(std::move(out.motion));
    }

    for (std::size_t i = 0; i < robots_.size(); ++i) {
        auto& body = robots_[i].body();
        body.waypoint = motions[i].waypoint;
        body.pose = kinematics_step(body, motions[i], config_.step_period);
    }

    auto delivered = channel_step(sent, config_.drop_prob, config_.comm_range, rng_);
    for (std::size_t i = 0; i < robots_.size(); ++i)
        inboxes_[i] = Inbox{std::move(delivered[i]), {}};
    ++step_;
    return rows;
}

bool World::all_in(FsmState state) const
{
    return std::all_of(robots_.begin(), robots_.end(), [&](const Robot& r) { return r.fsm() == state; });
}

bool World::formation_complete() const
{
    std::set<Label> held;
    for (const auto& r : robots_) {
        const auto& st = r.behavior().state();
        if (!st.my_label)
            continue;
        if (st.fsm != FsmState::Lock)
            return false;
        held.insert(*st.my_label);
    }
    return held.size() == graph_.size();
}

}  // namespace stigsim
