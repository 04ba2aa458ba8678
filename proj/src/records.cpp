#include "stigsim/records.hpp"

namespace stigsim {

std::size_t wire_size(const AllocRecord& r)
{
    if (const auto* open = std::get_if<OpenRecord>(&r))
        return 1 + 2 + 2 + 2 * open->labels.size();
    return 1 + 2 + 2;
}

std::size_t wire_size(const StatusRecord&) { return 1 + 1 + 2 + 2; }

std::size_t wire_size(const StartRecord&) { return 1; }

std::size_t wire_size(const Record& r)
{
    return std::visit([](const auto& alt) { return wire_size(alt); }, r);
}

Record to_record(StigRecord r)
{
    return std::visit([](auto&& alt) -> Record { return std::move(alt); }, std::move(r));
}

}  // namespace stigsim
