#include "stigsim/barrier.hpp"

namespace stigsim {

const char* to_string(BarrierOutcome o)
{
    switch (o) {
    case BarrierOutcome::Proceed: return "proceed";
    case BarrierOutcome::Waiting: return "waiting";
    case BarrierOutcome::TimedOut: return "timed_out";
    }
    return "?";
}

void barrier_create(BarrierState& state, StigmergyStore& store)
{
    state.wait_timer = 0;
    if (state.table) {
        store.discard(*state.table);
        state.table.reset();
        ++state.vstig_counter;
    }
    store.create(state.vstig_counter);
    state.table = state.vstig_counter;
}

BarrierOutcome barrier_step(BarrierState& state, StigmergyStore& store, RobotId self, std::size_t threshold,
                            const std::function<void()>& on_done, const std::function<void()>& on_timeout)
{
    if (!state.table)
        throw BarrierError("barrier_step called without barrier_create");
    const TableId id = *state.table;

    store.put(id, int_key(self), 1);
    store.get(id, int_key(self));
    const auto done_seen = [&] {
        const auto done = store.get(id, kDoneKey);
        return done && *done == StigValue{1};
    };

    if (store.table(id).size() - 1 >= threshold || done_seen()) {
        store.put(id, kDoneKey, 1);
        state.wait_timer = 0;
        if (on_done)
            on_done();
        return BarrierOutcome::Proceed;
    }
    if (state.wait_timer >= state.timeout) {
        store.discard(id);
        state.table.reset();
        state.wait_timer = 0;
        if (on_timeout)
            on_timeout();
        return BarrierOutcome::TimedOut;
    }
    ++state.wait_timer;
    return BarrierOutcome::Waiting;
}

}  // namespace stigsim
