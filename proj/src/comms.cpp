#include "stigsim/comms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace stigsim {

double distance(const Pose& a, const Pose& b)
{
    return std::hypot(b.x - a.x, b.y - a.y, b.z - a.z);
}

double planar_distance(const Pose& a, const Pose& b)
{
    return std::hypot(b.x - a.x, b.y - a.y);
}

std::size_t header_size(bool with_membership)
{
    return kHeaderSize + (with_membership ? kMembershipBitmapSize : 0);
}

OutboundQueue::OutboundQueue(std::size_t capacity, std::size_t header) : capacity_(capacity), header_(header)
{
    if (capacity_ <= header_)
        throw std::invalid_argument("frame capacity must exceed the header size");
}

void OutboundQueue::enqueue(Record record)
{
    const std::size_t size = wire_size(record);
    if (size > capacity_ - header_)
        throw FrameError("record of " + std::to_string(size) + " B cannot fit a " + std::to_string(capacity_) +
                         " B frame");
    records_.push_back(std::move(record));
}

Envelope assemble_frame(RobotId self, const Pose& pose, OutboundQueue& queue,
                        std::optional<std::uint16_t> membership)
{
    Envelope env;
    env.sender = self;
    env.pose = pose;
    env.membership = membership;
    env.byte_size = std::max(queue.header_, header_size(membership.has_value()));
    if (env.byte_size >= queue.capacity_)
        throw std::invalid_argument("frame capacity must exceed the header size");

    while (!queue.records_.empty()) {
        const std::size_t size = wire_size(queue.records_.front());
        if (env.byte_size + size > queue.capacity_)
            break;
        env.byte_size += size;
        env.records.push_back(std::move(queue.records_.front()));
        queue.records_.pop_front();
    }
    return env;
}

std::span<const Record> NeighborTable::on_envelope(const Envelope& env, Step now)
{
    if (env.sender == self_)
        throw std::invalid_argument("envelope from self delivered to neighbor table");
    entries_.insert_or_assign(env.sender, NeighborRecord{env.sender, env.pose, now});
    return env.records;
}

std::vector<NeighborRecord> NeighborTable::neighbors_list(Step now, Step max_age) const
{
    std::vector<NeighborRecord> out;
    for (const auto& [id, rec] : entries_)
        if (now - rec.last_seen <= max_age)
            out.push_back(rec);
    return out;
}

const NeighborRecord* NeighborTable::find(RobotId id) const
{
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

bool NeighborTable::is_fresh(RobotId id, Step now) const
{
    const auto* rec = find(id);
    return rec && now - rec->last_seen <= max_age_;
}

RangeBearing range_bearing(const Pose& self, const Pose& other)
{
    const double dx = other.x - self.x;
    const double dy = other.y - self.y;
    const double dz = other.z - self.z;
    const double planar = std::hypot(dx, dy);
    RangeBearing rb;
    rb.range = std::hypot(planar, dz);
    if (rb.range == 0.0)
        return rb;
    if (planar > 0.0) {
        rb.azimuth = std::atan2(dy, dx);
        // keep the half-open interval (-pi, pi]
        if (rb.azimuth <= -std::numbers::pi)
            rb.azimuth = std::numbers::pi;
    }
    rb.elevation = std::atan2(dz, planar);
    return rb;
}

}  // namespace stigsim
