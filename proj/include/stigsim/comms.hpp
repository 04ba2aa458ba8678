#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "stigsim/records.hpp"

namespace stigsim {

using Step = std::int64_t;

/// Position in a flat local metric frame; z is altitude.
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool operator==(const Pose&) const = default;
};

double distance(const Pose& a, const Pose& b);
double planar_distance(const Pose& a, const Pose& b);

inline constexpr std::size_t kFrameCapacity = 250;
// sender 2 B, pose 3 x 4 B, record count 2 B
inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::size_t kMembershipBitmapSize = 2;

struct Envelope {
    RobotId sender = 0;
    Pose pose;
    std::optional<std::uint16_t> membership;
    std::vector<Record> records;
    std::size_t byte_size = 0;
};

std::size_t header_size(bool with_membership);

class FrameError : public std::length_error {
  public:
    using std::length_error::length_error;
};

/// FIFO of records waiting for a frame. Records that do not fit into the
/// current frame stay queued for the next step; nothing is dropped here.
class OutboundQueue {
  public:
    explicit OutboundQueue(std::size_t capacity = kFrameCapacity, std::size_t header = kHeaderSize);

    void enqueue(Record record);

    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t header() const noexcept { return header_; }
    const std::deque<Record>& records() const noexcept { return records_; }

    friend Envelope assemble_frame(RobotId, const Pose&, OutboundQueue&, std::optional<std::uint16_t>);

  private:
    std::size_t capacity_;
    std::size_t header_;
    std::deque<Record> records_;
};

/// Builds this step's envelope from the longest prefix of the queue that fits
/// the frame. An envelope is produced even when no record is queued.
Envelope assemble_frame(RobotId self, const Pose& pose, OutboundQueue& queue,
                        std::optional<std::uint16_t> membership = std::nullopt);

struct NeighborRecord {
    RobotId id = 0;
    Pose pose;
    Step last_seen = 0;
};

class NeighborTable {
  public:
    static constexpr Step kDefaultMaxAge = 10;

    explicit NeighborTable(RobotId self, Step max_age = kDefaultMaxAge) : self_(self), max_age_(max_age) {}

    RobotId self() const noexcept { return self_; }
    Step max_age() const noexcept { return max_age_; }

    /// Records the sender and returns the envelope payload in order.
    std::span<const Record> on_envelope(const Envelope& env, Step now);

    std::vector<NeighborRecord> neighbors_list(Step now, Step max_age) const;
    std::vector<NeighborRecord> neighbors_list(Step now) const { return neighbors_list(now, max_age_); }

    const NeighborRecord* find(RobotId id) const;
    bool is_fresh(RobotId id, Step now) const;
    std::size_t size() const noexcept { return entries_.size(); }

  private:
    RobotId self_;
    Step max_age_;
    std::map<RobotId, NeighborRecord> entries_;
};

struct RangeBearing {
    double range = 0.0;
    double azimuth = 0.0;
    double elevation = 0.0;
};

RangeBearing range_bearing(const Pose& self, const Pose& other);

}  // namespace stigsim
