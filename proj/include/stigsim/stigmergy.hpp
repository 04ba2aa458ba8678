#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace stigsim {

using RobotId = std::uint16_t;
using TableId = std::uint8_t;
using Lamport = std::uint16_t;

/// Raised when a key or value does not satisfy the size limits of the wire format.
class SizeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kMaxKeyText = 15;
inline constexpr std::size_t kMaxValueText = 32;

/// Either a small integer (robot ids, labels) or a short text token such as "d".
using StigKey = std::variant<std::uint16_t, std::string>;
using StigValue = std::variant<std::int32_t, double, std::string>;

inline StigKey int_key(std::uint16_t k) { return StigKey{std::in_place_index<0>, k}; }
inline StigKey text_key(std::string_view k) { return StigKey{std::in_place_index<1>, std::string(k)}; }

void validate_key(const StigKey& key);
void validate_value(const StigValue& value);

std::size_t key_wire_size(const StigKey& key);
std::size_t value_wire_size(const StigValue& value);
std::string to_string(const StigKey& key);
std::string to_string(const StigValue& value);

struct StigEntry {
    StigKey key;
    StigValue value;
    Lamport lamport = 0;
    RobotId writer = 0;

    bool operator==(const StigEntry&) const = default;
};

/// Carries a full entry; used for local writes, gossip re-broadcasts and query answers.
struct PutRecord {
    TableId table = 0;
    StigEntry entry;

    bool operator==(const PutRecord&) const = default;
};

/// Asks peers for a key that is missing locally (lamport 0) or older than theirs.
struct QueryRecord {
    TableId table = 0;
    StigKey key;
    Lamport lamport = 0;

    bool operator==(const QueryRecord&) const = default;
};

// tag, table, key, value, lamport, writer
std::size_t wire_size(const PutRecord& r);
// tag, table, key, lamport
std::size_t wire_size(const QueryRecord& r);

enum class PutDecision { AdoptAndRebroadcast, Ignore, RespondWithLocal };

const char* to_string(PutDecision d);

/// Conflict resolution between the local version of a key and an incoming one.
/// Versions are ordered by (lamport, writer); the larger pair wins.
PutDecision decide(const StigEntry* local, const StigEntry& incoming) noexcept;

/// One robot's replica of a virtual stigmergy table.
class StigTable {
  public:
    struct PutResult {
        StigEntry entry;
        PutRecord record;
    };
    struct GetResult {
        std::optional<StigValue> value;
        std::optional<QueryRecord> query;
    };
    struct OnPutResult {
        PutDecision decision;
        std::optional<PutRecord> outbound;
    };

    explicit StigTable(TableId id) : id_(id) {}

    TableId id() const noexcept { return id_; }
    std::size_t size() const noexcept { return entries_.size(); }

    PutResult put(const StigKey& key, StigValue value, RobotId self);
    GetResult get(const StigKey& key) const;
    OnPutResult on_put(const StigEntry& incoming);
    std::optional<PutRecord> on_query(const QueryRecord& query) const;

    const StigEntry* find(const StigKey& key) const;
    const std::map<StigKey, StigEntry>& entries() const noexcept { return entries_; }

    bool operator==(const StigTable&) const = default;

  private:
    TableId id_;
    std::map<StigKey, StigEntry> entries_;
};

using StigRecord = std::variant<PutRecord, QueryRecord>;

/// All stigmergy tables of one robot plus the records they want broadcast.
///
/// Records for tables this robot has not created are ignored. Outbound
/// records are coalesced per step: only the newest version of a key is kept
/// and identical queries are merged.
class StigmergyStore {
  public:
    explicit StigmergyStore(RobotId self) : self_(self) {}

    RobotId self() const noexcept { return self_; }

    /// Creates (or replaces with an empty one) the table with this id.
    StigTable& create(TableId id);
    void discard(TableId id);
    bool contains(TableId id) const { return tables_.contains(id); }
    StigTable* find(TableId id);
    const StigTable* find(TableId id) const;
    StigTable& table(TableId id);

    StigEntry put(TableId id, const StigKey& key, StigValue value);
    std::optional<StigValue> get(TableId id, const StigKey& key);
    /// Queues the local entry again without touching its clock.
    void rebroadcast(TableId id, const StigKey& key);

    std::optional<PutDecision> receive(const PutRecord& record);
    void receive(const QueryRecord& record);

    const std::vector<StigRecord>& outbox() const noexcept { return outbox_; }
    std::vector<StigRecord> take_outbox();

  private:
    void stage(PutRecord record);
    void stage(QueryRecord record);

    RobotId self_;
    std::map<TableId, StigTable> tables_;
    std::vector<StigRecord> outbox_;
};

}  // namespace stigsim
