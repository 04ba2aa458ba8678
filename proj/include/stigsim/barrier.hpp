#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>

#include "stigsim/stigmergy.hpp"

namespace stigsim {

inline constexpr int kBarrierTimeout = 600;
inline const StigKey kDoneKey = text_key("d");

struct BarrierState {
    TableId vstig_counter = 0;
    std::optional<TableId> table;
    int wait_timer = 0;
    int timeout = kBarrierTimeout;
};

enum class BarrierOutcome { Proceed, Waiting, TimedOut };

const char* to_string(BarrierOutcome o);

class BarrierError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Creates the barrier table. A table still held from a previous barrier is
/// discarded and the table id advances; after a timeout no table is held, so
/// the retry reuses the same id as the peers that already went through.
void barrier_create(BarrierState& state, StigmergyStore& store);

/// One barrier step: announce presence, then pass once the presence table
/// holds threshold+1 robots or the done flag has been seen.
BarrierOutcome barrier_step(BarrierState& state, StigmergyStore& store, RobotId self, std::size_t threshold,
                            const std::function<void()>& on_done = {},
                            const std::function<void()>& on_timeout = {});

}  // namespace stigsim
