#pragma once

// Discrete-event simulation of two nodes sharing a simulated acoustic medium.
// Every transmitted frame is synthesized, pushed through the channel and
// demodulated by the listening node; the link layer only ever sees what the
// receiver decoded.

#include "mosquito/channel.hpp"
#include "mosquito/link.hpp"
#include "mosquito/modem.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace mosquito::session {

using link::SimTime;

struct SessionOptions {
    double budget_s = 3600.0;                // simulated time
    std::optional<double> receiver_lowpass;  // countermeasure cutoff at both receivers, Hz
    bool quantize_pcm16 = false;             // round received audio to the PCM16 grid
    bool record_audio = false;               // keep what each node heard
    bool stop_when_delivered = true;
};

struct SessionConfig {
    link::NodeConfig a; // sends the payload
    link::NodeConfig b;
    ModemConfig modem;  // carriers and sample rate; bit rate comes from the nodes
    channel::ChannelModel channel;
    std::vector<std::uint8_t> payload;
    std::uint64_t seed = 0;
    SessionOptions options;
};

enum class Reception { decoded, corrupted, undetected, deaf };
std::string_view to_string(Reception r);

struct FrameRecord {
    std::size_t id = 0;
    int from = 0; // node index
    framing::ControlMessage msg;
    double bit_rate = 0.0;
    SimTime start = 0;
    SimTime end = 0;
    Reception reception = Reception::undetected;
    std::optional<framing::ControlMessage> decoded; // what the peer decoded
    bool undetected_corruption = false;             // decoded != sent
    SimTime arrival_start = 0;                      // at the peer, after propagation delay
    SimTime arrival_end = 0;
};

struct RoleSpan {
    SimTime start;
    SimTime end;
    std::string role; // SPEAKER, MIC or RETASKING
};

struct PhaseChange {
    SimTime time;
    link::Phase phase;
};

struct HoldInterval {
    SimTime start;
    SimTime end;
};

struct LogEntry {
    SimTime time;
    std::string what;   // event or action type
    std::string detail;
};

struct NodeLog {
    std::string name;
    std::uint8_t initial_id = 0;
    std::uint8_t final_id = 0;
    double t_max_s = 0.0;
    std::vector<RoleSpan> roles;
    std::vector<PhaseChange> phases;
    std::vector<HoldInterval> holds;
    std::vector<LogEntry> events;
    std::vector<LogEntry> actions;
    std::optional<SimTime> discovered_at;
    int discovery_rounds = 0;
    int id_rerandomizations = 0;
    double final_bit_rate = 0.0;
};

struct Summary {
    bool complete = false;  // payload delivered and acknowledged
    bool delivered = false; // receiver output equals the payload
    std::size_t payload_bytes = 0;
    std::size_t delivered_bytes = 0;
    std::size_t frames = 0;
    std::size_t data_frames = 0;
    std::size_t retransmits = 0;
    std::size_t corrupted_frames = 0;
    std::size_t undetected_corruptions = 0;
    double duration_s = 0.0;
    double data_phase_s = 0.0;
    double goodput_bps = 0.0;
    double protocol_efficiency_bound_bps = 0.0;
    int discovery_rounds = 0;
    int id_rerandomizations = 0;
};

struct SessionTrace {
    std::string mode; // "bidirectional" or "unidirectional"
    std::uint64_t seed = 0;
    std::array<NodeLog, 2> nodes;
    std::vector<FrameRecord> frames;
    std::vector<std::uint8_t> delivered;
    Summary summary;
    std::array<SampleBuffer, 2> heard; // only with record_audio
};

SessionTrace run_session(const SessionConfig& cfg);

struct UnidirectionalConfig {
    link::NodeConfig tx; // mode unidirectional_tx, reversible = false
    link::NodeConfig rx; // mode unidirectional_rx
    ModemConfig modem;
    channel::ChannelModel channel;
    std::vector<std::uint8_t> payload;
    double start_time_s = 2.0;
    double guard_s = 2.0;
    std::optional<double> record_from_s; // default start_time_s - guard_s
    std::uint64_t seed = 0;
    SessionOptions options;
};

SessionTrace unidirectional_schedule(const UnidirectionalConfig& cfg);

// Invariant checks over a finished trace; each returns the violation count.
std::size_t token_exclusivity_violations(const SessionTrace& t);
std::size_t t_max_violations(const SessionTrace& t);
std::size_t half_duplex_violations(const SessionTrace& t);
std::size_t ack_messages(const SessionTrace& t); // ACK_OK + RETRANSMIT frames

// Deterministic JSON (sorted keys).
nlohmann::json to_json(const SessionTrace& t);

} // namespace mosquito::session
