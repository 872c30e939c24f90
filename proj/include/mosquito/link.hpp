#pragma once

// Per-node protocol state machine: discovery beacons, virtual token turns,
// selective retransmission, bitrate negotiation and the unidirectional mode.
//
// step() is a pure function. Actions are executed in order on the node's own
// timeline: a Retask occupies its latency, a Transmit occupies the frame air
// time plus the inter-frame gap, and SetTimer delays count from the point the
// preceding actions finish.

#include "mosquito/framing.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace mosquito::link {

using SimTime = std::int64_t; // microseconds

inline constexpr SimTime kSecond = 1'000'000;
SimTime from_seconds(double s);
double to_seconds(SimTime t);

enum class Phase { discovering, discovered, idle, holding_token, listening };
enum class Role { speaker, mic };
enum class Mode { bidirectional, unidirectional_tx, unidirectional_rx };
enum class BitrateDirection : std::uint8_t { inc = 1, dec = 2 };

enum class TimerKind {
    discovery_backoff,
    discovery_ack_wait,
    discovery_reply,
    acquire_guard,
    tx_slot,
    silence,
};

// ACK_OK reuses the seq octet: low nibble says what is acknowledged, high
// nibble carries the hole count of a data status.
enum class AckSubject : std::uint8_t { data = 0, discovery = 1, bitrate = 2 };
// RETRANSMIT seq: ordinal of the hole within its status (1..), 0 = resend all.
inline constexpr std::uint8_t kRetransmitRestart = 0;

std::string_view to_string(Phase p);
std::string_view to_string(Role r);
std::string_view to_string(TimerKind k);

struct NodeConfig {
    std::string name = "node";
    Mode mode = Mode::bidirectional;
    double bit_rate = 166.0;
    double min_bit_rate = 10.0;
    double max_bit_rate = 500.0;
    double t_max_s = 10.0;
    double retask_latency_s = 0.05;
    double discovery_backoff_max_s = 5.0;
    double discovery_ack_wait_s = 5.0;
    std::size_t discovery_ack_copies = 2;
    std::size_t gap_slots = 4;
    double turnaround_margin_s = 0.02;
    bool reversible = true; // false: active speaker, can never listen
    bool adaptive_bitrate = false;
    std::optional<std::uint8_t> forced_id;
    std::uint64_t seed = 0;
    int sample_rate = 48000; // only used for slot arithmetic
};

// Throws ConfigError when the token turn cannot carry a single DATA frame at
// the configured rate, or for non-positive durations.
void validate(const NodeConfig& cfg);

// Air time of one 46-bit frame and of the silent gap after it.
SimTime frame_air_time(const NodeConfig& cfg, double bit_rate);
SimTime gap_time(const NodeConfig& cfg, double bit_rate);

struct NodeState {
    NodeConfig cfg;
    std::uint8_t node_id = 0;
    Phase phase = Phase::discovering;
    Role transducer_role = Role::mic;
    std::optional<std::uint8_t> peer_id;
    std::optional<std::uint8_t> pending_discovery_ack; // beacon heard, ack not yet sent
    SimTime last_event = -1;
    SimTime token_acquired_at = -1;
    SimTime token_deadline = -1;
    std::optional<SimTime> peer_turn_heard; // first decoded frame of the peer's turn

    double bit_rate_current = 166.0;
    std::optional<double> bit_rate_alternate; // also accepted when decoding
    std::optional<BitrateDirection> proposed_change;
    std::optional<BitrateDirection> change_to_ack;
    int clean_batches = 0;

    // Sender side. tx_base is the first chunk not yet acknowledged.
    std::vector<std::uint16_t> tx_chunks;
    std::vector<bool> tx_acked;
    std::map<int, std::size_t> tx_holes; // hole ordinal -> chunk, this status
    std::size_t tx_base = 0;
    std::size_t tx_next = 0; // next chunk to send in the current turn

    // Receiver side. rx_next is the first missing chunk, rx_horizon one past
    // the highest chunk held.
    std::map<std::size_t, std::uint16_t> rx_chunks;
    std::size_t rx_next = 0;
    std::size_t rx_horizon = 0;
    bool rx_is_receiver = false;
    bool rx_data_seen = false;
    bool rx_restart = false;  // ask the sender to start over
    int rx_turn_frames = 0;   // frames heard since the peer's last RELEASE
    std::vector<framing::ControlMessage> status_queue;
    int rx_batch_frames = 0;
    int rx_batch_errors = 0;
    bool delivered = false;
    int payload_resets = 0; // assembled payload failed its checksum

    std::uint8_t msg_seq = 0;
    bool status_sent = false;   // status already sent this turn
    bool proposal_sent = false; // bitrate proposal already sent this turn
    int discovery_rounds = 0;
    int id_rerandomizations = 0;
    std::mt19937_64 rng;
};

NodeState make_node(const NodeConfig& cfg, std::vector<std::uint8_t> payload = {});

struct FrameReceived {
    SimTime time;
    framing::ControlMessage msg;
    double decoded_rate = 0.0; // rate the receiver locked at; 0 when unknown
};
// Carrier sensed but the frame failed preamble or CRC checks.
struct FrameCorrupted {
    SimTime time;
};
struct Timeout {
    SimTime time;
    TimerKind kind;
};
struct ScheduleTick {
    SimTime time;
};
using LinkEvent = std::variant<FrameReceived, FrameCorrupted, Timeout, ScheduleTick>;

SimTime event_time(const LinkEvent& e);

struct Transmit {
    framing::ControlMessage msg;
    double bit_rate;
};
struct Retask {
    Role role;
    double latency_s;
};
struct SetTimer {
    TimerKind kind;
    double delay_s;
};
struct CancelTimer {
    TimerKind kind;
};
struct DeliverData {
    std::vector<std::uint8_t> bytes;
};
struct AdjustBitrate {
    BitrateDirection direction;
    double new_rate;
};
using LinkAction = std::variant<Transmit, Retask, SetTimer, CancelTimer, DeliverData, AdjustBitrate>;

struct StepResult {
    NodeState state;
    std::vector<LinkAction> actions;
};

// Throws ProtocolError when the event is older than the last processed one.
StepResult step(NodeState state, const LinkEvent& event);

// x1.05 / ÷1.05 clamped to the node's rate range. Throws ProtocolError while
// the node is still discovering.
NodeState adapt_bitrate(NodeState state, BitrateDirection direction);

// Silence timeout after which a listening node assumes the token was lost.
// The node with the higher id recovers first; the offset exceeds two full
// turns so the two timers can never both fire inside one turn.
double silence_timeout_s(const NodeState& state);

} // namespace mosquito::link
