#pragma once

// Payload records carried inside a broadcast envelope, with their byte accounting.

#include <cstdint>
#include <variant>
#include <vector>

#include "stigsim/stigmergy.hpp"

namespace stigsim {

using Label = std::uint16_t;

/// Joined robot advertising its unfilled successor labels.
/// Wire: tag 1 B, advertiser id 2 B, advertiser label 2 B, 2 B per listed label.
struct OpenRecord {
    std::vector<Label> labels;
    RobotId advertiser = 0;
    Label advertiser_label = 0;

    bool operator==(const OpenRecord&) const = default;
};

struct RequestRecord {
    Label label = 0;
    RobotId requester = 0;

    bool operator==(const RequestRecord&) const = default;
};

struct GrantRecord {
    Label label = 0;
    RobotId grantee = 0;

    bool operator==(const GrantRecord&) const = default;
};

struct JoinedRecord {
    Label label = 0;
    RobotId robot = 0;

    bool operator==(const JoinedRecord&) const = default;
};

using AllocRecord = std::variant<OpenRecord, RequestRecord, GrantRecord, JoinedRecord>;

inline constexpr std::uint16_t kNoLabel = 0xFFFF;

/// Per-step state tag: behavior state, held label and believed root robot.
/// Wire: tag 1 B, state 1 B, label 2 B, root 2 B.
struct StatusRecord {
    std::uint8_t state = 0;
    std::uint16_t label = kNoLabel;
    std::uint16_t root = kNoLabel;

    bool operator==(const StatusRecord&) const = default;
};

/// Mission start order. Wire: tag 1 B.
struct StartRecord {
    bool operator==(const StartRecord&) const = default;
};

using Record = std::variant<PutRecord, QueryRecord, AllocRecord, StatusRecord, StartRecord>;

std::size_t wire_size(const AllocRecord& r);
std::size_t wire_size(const StatusRecord& r);
std::size_t wire_size(const StartRecord& r);
std::size_t wire_size(const Record& r);

Record to_record(StigRecord r);

}  // namespace stigsim
