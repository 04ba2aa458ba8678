#include "stigsim/stigmergy.hpp"

#include <algorithm>
#include <limits>
#include <sstream>
#include <tuple>
#include <utility>

namespace stigsim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool same_key_record(const StigRecord& r, TableId table, const StigKey& key)
{
    const auto* put = std::get_if<PutRecord>(&r);
    return put && put->table == table && put->entry.key == key;
}

}  // namespace

void validate_key(const StigKey& key)
{
    if (const auto* text = std::get_if<std::string>(&key)) {
        if (text->empty())
            throw SizeError("stigmergy key: text token must not be empty");
        if (text->size() > kMaxKeyText)
            throw SizeError("stigmergy key: text token '" + *text + "' exceeds " +
                            std::to_string(kMaxKeyText) + " bytes");
    }
}

void validate_value(const StigValue& value)
{
    if (const auto* text = std::get_if<std::string>(&value); text && text->size() > kMaxValueText)
        throw SizeError("stigmergy value: text exceeds " + std::to_string(kMaxValueText) + " bytes");
}

std::size_t key_wire_size(const StigKey& key)
{
    return std::visit(overloaded{[](std::uint16_t) -> std::size_t { return 1 + 2; },
                                 [](const std::string& s) -> std::size_t { return 1 + 1 + s.size(); }},
                      key);
}

std::size_t value_wire_size(const StigValue& value)
{
    return std::visit(overloaded{[](std::int32_t) -> std::size_t { return 1 + 4; },
                                 [](double) -> std::size_t { return 1 + 8; },
                                 [](const std::string& s) -> std::size_t { return 1 + 1 + s.size(); }},
                      value);
}

std::string to_string(const StigKey& key)
{
    return std::visit(overloaded{[](std::uint16_t k) { return std::to_string(k); },
                                 [](const std::string& s) { return '"' + s + '"'; }},
                      key);
}

std::string to_string(const StigValue& value)
{
    return std::visit(overloaded{[](std::int32_t v) { return std::to_string(v); },
                                 [](double v) {
                                     std::ostringstream os;
                                     os << v;
                                     return os.str();
                                 },
                                 [](const std::string& s) { return '"' + s + '"'; }},
                      value);
}

std::size_t wire_size(const PutRecord& r)
{
    return 1 + 1 + key_wire_size(r.entry.key) + value_wire_size(r.entry.value) + 2 + 2;
}

std::size_t wire_size(const QueryRecord& r)
{
    return 1 + 1 + key_wire_size(r.key) + 2;
}

const char* to_string(PutDecision d)
{
    switch (d) {
    case PutDecision::AdoptAndRebroadcast: return "adopt";
    case PutDecision::Ignore: return "ignore";
    case PutDecision::RespondWithLocal: return "respond";
    }
    return "?";
}

PutDecision decide(const StigEntry* local, const StigEntry& incoming) noexcept
{
    if (!local)
        return PutDecision::AdoptAndRebroadcast;
    const auto mine = std::tie(local->lamport, local->writer);
    const auto theirs = std::tie(incoming.lamport, incoming.writer);
    if (theirs > mine)
        return PutDecision::AdoptAndRebroadcast;
    if (theirs == mine)
        return PutDecision::Ignore;
    return PutDecision::RespondWithLocal;
}

StigTable::PutResult StigTable::put(const StigKey& key, StigValue value, RobotId self)
{
    validate_key(key);
    validate_value(value);

    Lamport lamport = 1;
    if (auto it = entries_.find(key); it != entries_.end()) {
        if (it->second.lamport == std::numeric_limits<Lamport>::max())
            throw std::overflow_error("stigmergy: lamport clock exhausted for key " + to_string(key));
        lamport = static_cast<Lamport>(it->second.lamport + 1);
    }
    StigEntry entry{key, std::move(value), lamport, self};
    entries_.insert_or_assign(key, entry);
    return {entry, PutRecord{id_, entry}};
}

StigTable::GetResult StigTable::get(const StigKey& key) const
{
    if (const auto* e = find(key))
        return {e->value, std::nullopt};
    return {std::nullopt, QueryRecord{id_, key, 0}};
}

StigTable::OnPutResult StigTable::on_put(const StigEntry& incoming)
{
    auto it = entries_.find(incoming.key);
    const StigEntry* local = it == entries_.end() ? nullptr : &it->second;
    const PutDecision d = decide(local, incoming);
    switch (d) {
    case PutDecision::AdoptAndRebroadcast:
        entries_.insert_or_assign(incoming.key, incoming);
        return {d, PutRecord{id_, incoming}};
    case PutDecision::RespondWithLocal:
        return {d, PutRecord{id_, *local}};
    case PutDecision::Ignore:
        break;
    }
    return {d, std::nullopt};
}

std::optional<PutRecord> StigTable::on_query(const QueryRecord& query) const
{
    if (const auto* e = find(query.key); e && e->lamport > query.lamport)
        return PutRecord{id_, *e};
    return std::nullopt;
}

const StigEntry* StigTable::find(const StigKey& key) const
{
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

StigTable& StigmergyStore::create(TableId id)
{
    return tables_.insert_or_assign(id, StigTable(id)).first->second;
}

void StigmergyStore::discard(TableId id)
{
    tables_.erase(id);
}

StigTable* StigmergyStore::find(TableId id)
{
    auto it = tables_.find(id);
    return it == tables_.end() ? nullptr : &it->second;
}

const StigTable* StigmergyStore::find(TableId id) const
{
    auto it = tables_.find(id);
    return it == tables_.end() ? nullptr : &it->second;
}

StigTable& StigmergyStore::table(TableId id)
{
    if (auto* t = find(id))
        return *t;
    throw std::out_of_range("stigmergy: table " + std::to_string(id) + " was never created");
}

StigEntry StigmergyStore::put(TableId id, const StigKey& key, StigValue value)
{
    auto result = table(id).put(key, std::move(value), self_);
    stage(std::move(result.record));
    return result.entry;
}

std::optional<StigValue> StigmergyStore::get(TableId id, const StigKey& key)
{
    auto result = table(id).get(key);
    if (result.query)
        stage(std::move(*result.query));
    return result.value;
}

void StigmergyStore::rebroadcast(TableId id, const StigKey& key)
{
    if (const auto* e = table(id).find(key))
        stage(PutRecord{id, *e});
}

std::optional<PutDecision> StigmergyStore::receive(const PutRecord& record)
{
    auto* t = find(record.table);
    if (!t)
        return std::nullopt;
    auto result = t->on_put(record.entry);
    if (result.outbound)
        stage(std::move(*result.outbound));
    return result.decision;
}

void StigmergyStore::receive(const QueryRecord& record)
{
    const auto* t = find(record.table);
    if (!t)
        return;
    if (auto answer = t->on_query(record))
        stage(std::move(*answer));
}

std::vector<StigRecord> StigmergyStore::take_outbox()
{
    return std::exchange(outbox_, {});
}

void StigmergyStore::stage(PutRecord record)
{
    auto it = std::find_if(outbox_.begin(), outbox_.end(), [&](const StigRecord& r) {
        return same_key_record(r, record.table, record.entry.key);
    });
    if (it == outbox_.end()) {
        outbox_.emplace_back(std::move(record));
        return;
    }
    auto& staged = std::get<PutRecord>(*it).entry;
    if (std::tie(record.entry.lamport, record.entry.writer) > std::tie(staged.lamport, staged.writer))
        staged = std::move(record.entry);
}

void StigmergyStore::stage(QueryRecord record)
{
    if (std::find(outbox_.begin(), outbox_.end(), StigRecord{record}) == outbox_.end())
        outbox_.emplace_back(std::move(record));
}

}  // namespace stigsim
