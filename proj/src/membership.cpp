#include "stigsim/membership.hpp"

#include <stdexcept>
#include <string>

namespace stigsim {

namespace {

void check_sid(SwarmId sid)
{
    if (sid >= kMaxSwarms)
        throw std::out_of_range("swarm id " + std::to_string(sid) + " exceeds the 16-swarm bitmap");
}

}  // namespace

void SwarmView::join(SwarmId sid)
{
    check_sid(sid);
    own_.insert(sid);
    members_[sid].insert(self_);
}

void SwarmView::leave(SwarmId sid)
{
    if (!own_.erase(sid))
        return;
    if (auto it = members_.find(sid); it != members_.end()) {
        it->second.erase(self_);
        if (it->second.empty())
            members_.erase(it);
    }
}

bool SwarmView::in(SwarmId sid, RobotId robot) const
{
    auto it = members_.find(sid);
    return it != members_.end() && it->second.contains(robot);
}

std::uint16_t SwarmView::bitmap() const noexcept
{
    std::uint16_t bits = 0;
    for (SwarmId sid : own_)
        bits = static_cast<std::uint16_t>(bits | (1u << sid));
    return bits;
}

void SwarmView::observe(RobotId sender, std::uint16_t bitmap)
{
    if (sender == self_)
        return;
    for (SwarmId sid = 0; sid < kMaxSwarms; ++sid) {
        if (bitmap & (1u << sid)) {
            members_[sid].insert(sender);
        } else if (auto it = members_.find(sid); it != members_.end()) {
            it->second.erase(sender);
            if (it->second.empty())
                members_.erase(it);
        }
    }
}

}  // namespace stigsim
