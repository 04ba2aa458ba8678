#pragma once

#include <cstdint>
#include <map>
#include <set>

#include "stigsim/stigmergy.hpp"

namespace stigsim {

using SwarmId = std::uint8_t;

inline constexpr std::size_t kMaxSwarms = 16;

/// Sub-swarm memberships as seen by one robot.
///
/// The robot's own memberships travel as a 16-bit bitmap in every envelope
/// header; peers overwrite their record of the sender on each delivery.
class SwarmView {
  public:
    explicit SwarmView(RobotId self) : self_(self) {}

    RobotId self() const noexcept { return self_; }

    void join(SwarmId sid);
    void leave(SwarmId sid);
    bool in(SwarmId sid, RobotId robot) const;

    const std::set<SwarmId>& own_flags() const noexcept { return own_; }
    const std::map<SwarmId, std::set<RobotId>>& memberships() const noexcept { return members_; }

    std::uint16_t bitmap() const noexcept;
    void observe(RobotId sender, std::uint16_t bitmap);

  private:
    RobotId self_;
    std::set<SwarmId> own_;
    std::map<SwarmId, std::set<RobotId>> members_;
};

}  // namespace stigsim
