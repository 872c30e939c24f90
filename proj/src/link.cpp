#include "mosquito/link.hpp"

#include "mosquito/error.hpp"

#include <algorithm>
#include <cmath>

namespace mosquito::link {

using framing::ControlMessage;
using framing::MessageKind;

namespace {

constexpr std::size_t kSendWindow = 127; // chunks in flight, under half the seq space
constexpr std::uint8_t kMaxHoles = 8;     // RETRANSMIT frames per status

std::size_t slot_samples(const NodeConfig& cfg, double rate)
{
    return static_cast<std::size_t>(std::lround(cfg.sample_rate / rate));
}

double clamp_rate(const NodeConfig& cfg, double rate)
{
    return std::clamp(rate, cfg.min_bit_rate, cfg.max_bit_rate);
}

// ACQUIRE + one DATA + RELEASE, each followed by its gap, plus the retask.
bool turn_fits_data(const NodeConfig& cfg, double rate)
{
    const SimTime air = frame_air_time(cfg, rate);
    const SimTime gap = gap_time(cfg, rate);
    return from_seconds(cfg.retask_latency_s) + 2 * (air + gap) + air <= from_seconds(cfg.t_max_s);
}

// Nearest absolute index to `anchor` whose low octet equals seq.
std::int64_t unwrap_seq(std::uint8_t seq, std::size_t anchor)
{
    const auto diff = static_cast<std::int8_t>(static_cast<std::uint8_t>(seq - static_cast<std::uint8_t>(anchor & 0xff)));
    return static_cast<std::int64_t>(anchor) + diff;
}

class Machine {
public:
    Machine(NodeState& s, std::vector<LinkAction>& out, SimTime now) : s_(s), out_(out), now_(now) {}

    void on(const ScheduleTick&)
    {
        switch (s_.cfg.mode) {
        case Mode::bidirectional:
            if (s_.phase == Phase::discovering)
                set_timer(TimerKind::discovery_backoff, random_backoff());
            break;
        case Mode::unidirectional_tx:
            for (std::size_t i = 0; i < s_.tx_chunks.size(); ++i)
                transmit({MessageKind::data, 0, static_cast<std::uint8_t>(i & 0xff), s_.tx_chunks[i]});
            s_.tx_next = s_.tx_chunks.size();
            break;
        case Mode::unidirectional_rx:
            break;
        }
    }

    void on(const Timeout& t)
    {
        switch (t.kind) {
        case TimerKind::discovery_backoff:
            if (s_.phase == Phase::discovering)
                beacon();
            break;
        case TimerKind::discovery_ack_wait:
            if (s_.phase == Phase::discovering)
                set_timer(TimerKind::discovery_backoff, random_backoff());
            break;
        case TimerKind::discovery_reply:
            send_discovery_ack();
            break;
        case TimerKind::acquire_guard:
        case TimerKind::silence:
            if (s_.phase == Phase::listening || s_.phase == Phase::discovered || s_.phase == Phase::idle)
                begin_hold();
            break;
        case TimerKind::tx_slot:
            if (s_.phase == Phase::holding_token)
                next_transmission();
            break;
        }
    }

    void on(const FrameCorrupted&)
    {
        if (s_.cfg.mode != Mode::bidirectional)
            return;
        if (s_.phase != Phase::listening && s_.phase != Phase::idle)
            return;
        s_.rx_is_receiver = true;
        ++s_.rx_turn_frames;
        ++s_.rx_batch_errors;
        arm_silence();
    }

    void on(const FrameReceived& f)
    {
        const ControlMessage& msg = f.msg;
        if (s_.cfg.mode == Mode::unidirectional_rx) {
            if (msg.kind == MessageKind::data)
                accept_data(msg);
            return;
        }
        if (s_.cfg.mode == Mode::unidirectional_tx || s_.phase == Phase::holding_token)
            return;

        if (msg.kind == MessageKind::discovery) {
            on_beacon(msg);
            return;
        }
        if (msg.kind == MessageKind::ack_ok && msg.seq == static_cast<std::uint8_t>(AckSubject::discovery)) {
            if (s_.phase == Phase::discovering && msg.body == s_.node_id)
                on_discovered(msg.sender_id);
            return;
        }
        if (!from_peer(msg))
            return;
        if (s_.phase == Phase::discovering || s_.phase == Phase::discovered) {
            // Token traffic from a known peer: the link is up.
            enter_listening();
        }
        if (f.decoded_rate > 0.0 && s_.bit_rate_alternate && f.decoded_rate == *s_.bit_rate_alternate)
            adopt_rate(f.decoded_rate);
        on_link_message(msg);
    }

private:
    NodeState& s_;
    std::vector<LinkAction>& out_;
    SimTime now_;

    double rate() const { return s_.bit_rate_current; }

    double random_backoff()
    {
        const auto max_ms = static_cast<std::uint64_t>(std::llround(s_.cfg.discovery_backoff_max_s * 1000.0));
        return static_cast<double>(s_.rng() % (max_ms + 1)) / 1000.0;
    }

    void set_timer(TimerKind kind, double delay_s) { out_.push_back(SetTimer{kind, delay_s}); }
    void cancel_timer(TimerKind kind) { out_.push_back(CancelTimer{kind}); }

    void to_speaker()
    {
        if (s_.transducer_role == Role::speaker)
            return;
        out_.push_back(Retask{Role::speaker, s_.cfg.retask_latency_s});
        s_.transducer_role = Role::speaker;
    }

    void to_mic()
    {
        if (!s_.cfg.reversible || s_.transducer_role == Role::mic)
            return;
        out_.push_back(Retask{Role::mic, s_.cfg.retask_latency_s});
        s_.transducer_role = Role::mic;
    }

    void transmit(const ControlMessage& msg) { out_.push_back(Transmit{msg, rate()}); }

    ControlMessage control(MessageKind kind, std::uint8_t seq, std::uint16_t body = 0) const
    {
        return {kind, s_.node_id, seq, body};
    }

    std::uint8_t next_seq() { return s_.msg_seq++; }

    bool from_peer(const ControlMessage& msg) const
    {
        if (!s_.peer_id)
            return false;
        return msg.kind == MessageKind::data || msg.sender_id == *s_.peer_id;
    }

    // Discovery ------------------------------------------------------------

    void beacon()
    {
        ++s_.discovery_rounds;
        to_speaker();
        transmit(control(MessageKind::discovery, static_cast<std::uint8_t>(s_.discovery_rounds & 0xff)));
        to_mic();
        set_timer(TimerKind::discovery_ack_wait, s_.cfg.discovery_ack_wait_s);
    }

    void on_beacon(const ControlMessage& msg)
    {
        if (msg.sender_id == s_.node_id) {
            if (s_.phase != Phase::discovering)
                return;
            const std::uint8_t old = s_.node_id;
            do {
                s_.node_id = static_cast<std::uint8_t>(s_.rng() & 0xff);
            } while (s_.node_id == old);
            ++s_.id_rerandomizations;
            cancel_timer(TimerKind::discovery_ack_wait);
            // Rebroadcast as soon as the other node can listen again.
            set_timer(TimerKind::discovery_backoff, to_seconds(gap_time(s_.cfg, rate())) + s_.cfg.retask_latency_s +
                                                        s_.cfg.turnaround_margin_s);
            return;
        }
        if (s_.peer_id && *s_.peer_id != msg.sender_id && s_.phase != Phase::discovering)
            return;
        s_.peer_id = msg.sender_id;
        // The beaconing node still has to turn its transducer around.
        s_.pending_discovery_ack = msg.sender_id;
        set_timer(TimerKind::discovery_reply, to_seconds(gap_time(s_.cfg, rate())) + s_.cfg.turnaround_margin_s);
    }

    void send_discovery_ack()
    {
        if (!s_.pending_discovery_ack || s_.phase == Phase::holding_token)
            return;
        const std::uint8_t peer = *s_.pending_discovery_ack;
        s_.pending_discovery_ack.reset();
        to_speaker();
        for (std::size_t i = 0; i < s_.cfg.discovery_ack_copies; ++i)
            transmit(control(MessageKind::ack_ok, static_cast<std::uint8_t>(AckSubject::discovery), peer));
        to_mic();
        if (s_.phase == Phase::listening || s_.phase == Phase::idle)
            set_timer(TimerKind::silence, silence_timeout_s(s_));
    }

    void on_discovered(std::uint8_t peer)
    {
        s_.phase = Phase::discovered;
        s_.peer_id = peer;
        cancel_timer(TimerKind::discovery_backoff);
        cancel_timer(TimerKind::discovery_ack_wait);
        if (s_.node_id > peer) {
            // Higher id opens the first turn once the peer's ack copies are done.
            const double air = to_seconds(frame_air_time(s_.cfg, rate()) + gap_time(s_.cfg, rate()));
            set_timer(TimerKind::acquire_guard, static_cast<double>(s_.cfg.discovery_ack_copies) * air +
                                                    s_.cfg.retask_latency_s + s_.cfg.turnaround_margin_s);
        } else {
            enter_listening();
        }
    }

    void enter_listening()
    {
        s_.phase = Phase::listening;
        cancel_timer(TimerKind::discovery_backoff);
        cancel_timer(TimerKind::discovery_ack_wait);
        set_timer(TimerKind::silence, silence_timeout_s(s_));
    }

    // Token turns ------------------------------------------------------------

    // The peer must release by T_max after its first frame we decoded.
    void arm_silence()
    {
        if (!s_.peer_turn_heard) {
            set_timer(TimerKind::silence, silence_timeout_s(s_));
            return;
        }
        const double guard = s_.cfg.retask_latency_s + to_seconds(gap_time(s_.cfg, rate())) +
                             s_.cfg.turnaround_margin_s;
        const SimTime at = *s_.peer_turn_heard + from_seconds(s_.cfg.t_max_s + guard);
        set_timer(TimerKind::silence, std::max(0.0, to_seconds(at - now_)));
    }

    void on_link_message(const ControlMessage& msg)
    {
        if (!s_.peer_turn_heard && msg.kind != MessageKind::release)
            s_.peer_turn_heard = now_;
        arm_silence();
        switch (msg.kind) {
        case MessageKind::data:
            accept_data(msg);
            break;
        case MessageKind::ack_ok:
            if ((msg.seq & 0x0f) == static_cast<std::uint8_t>(AckSubject::data))
                apply_ack(static_cast<std::uint8_t>(msg.body + 1), msg.seq >> 4);
            else if (msg.seq == static_cast<std::uint8_t>(AckSubject::bitrate) && s_.proposed_change &&
                     msg.body == static_cast<std::uint16_t>(*s_.proposed_change))
                commit_rate_change(*s_.proposed_change);
            break;
        case MessageKind::retransmit:
            if (msg.seq == kRetransmitRestart)
                restart_send();
            else
                mark_missing(msg.seq, static_cast<std::uint8_t>(msg.body));
            break;
        case MessageKind::bitrate_inc:
            s_.change_to_ack = BitrateDirection::inc;
            break;
        case MessageKind::bitrate_dec:
            s_.change_to_ack = BitrateDirection::dec;
            break;
        case MessageKind::release: {
            // A whole turn without DATA while we still wait: the sender thinks
            // it is done.
            if (s_.rx_data_seen && !s_.delivered && s_.rx_turn_frames == 0)
                s_.rx_restart = true;
            s_.rx_turn_frames = 0;
            s_.peer_turn_heard.reset();
            cancel_timer(TimerKind::silence);
            const double guard = to_seconds(gap_time(s_.cfg, rate())) + s_.cfg.retask_latency_s +
                                 s_.cfg.turnaround_margin_s;
            set_timer(TimerKind::acquire_guard, guard);
            break;
        }
        case MessageKind::acquire:
        case MessageKind::discovery:
            break;
        }
    }

    void accept_data(const ControlMessage& msg)
    {
        s_.rx_is_receiver = true;
        s_.rx_data_seen = true;
        ++s_.rx_turn_frames;
        ++s_.rx_batch_frames;
        const std::size_t anchor = s_.cfg.mode == Mode::unidirectional_rx ? s_.rx_horizon : s_.rx_next;
        const std::int64_t index = unwrap_seq(msg.seq, anchor);
        if (index < static_cast<std::int64_t>(s_.rx_next))
            return;
        const auto idx = static_cast<std::size_t>(index);
        const auto zero = s_.rx_chunks.find(0);
        if (zero != s_.rx_chunks.end() && idx >= framing::chunk_count_for(zero->second))
            return;
        s_.rx_chunks.emplace(idx, msg.body);
        s_.rx_horizon = std::max(s_.rx_horizon, idx + 1);
        while (s_.rx_chunks.count(s_.rx_next))
            ++s_.rx_next;

        const auto head = s_.rx_chunks.find(0);
        if (s_.delivered || head == s_.rx_chunks.end())
            return;
        const std::size_t needed = framing::chunk_count_for(head->second);
        if (s_.rx_next < needed)
            return;
        std::vector<std::uint16_t> chunks;
        chunks.reserve(needed);
        for (std::size_t i = 0; i < needed; ++i)
            chunks.push_back(s_.rx_chunks.at(i));
        if (auto bytes = framing::unpack_chunks(chunks)) {
            s_.delivered = true;
            out_.push_back(DeliverData{std::move(*bytes)});
        } else {
            // A corrupted chunk slipped past the frame CRC: start over.
            clear_rx();
            s_.rx_restart = true;
            ++s_.payload_resets;
        }
    }

    void clear_rx()
    {
        s_.rx_chunks.clear();
        s_.rx_next = 0;
        s_.rx_horizon = 0;
    }

    // Holes first, then the horizon twice. Everything below the horizon that
    // is not named as a hole has arrived.
    void build_status()
    {
        s_.status_queue.clear();
        if (s_.rx_restart) {
            s_.rx_restart = false;
            clear_rx();
            s_.status_queue.push_back(control(MessageKind::retransmit, kRetransmitRestart));
            return;
        }
        std::size_t horizon = s_.rx_horizon;
        std::uint8_t holes = 0;
        for (std::size_t i = s_.rx_next; i < s_.rx_horizon; ++i) {
            if (s_.rx_chunks.count(i))
                continue;
            if (holes == kMaxHoles) {
                horizon = i;
                break;
            }
            s_.status_queue.push_back(
                control(MessageKind::retransmit, ++holes, static_cast<std::uint16_t>(i & 0xff)));
        }
        const auto ack = control(MessageKind::ack_ok,
                                 static_cast<std::uint8_t>(holes << 4 | static_cast<std::uint8_t>(AckSubject::data)),
                                 static_cast<std::uint16_t>((horizon - 1) & 0xff));
        s_.status_queue.push_back(ack);
        s_.status_queue.push_back(ack);
    }

    void apply_ack(std::uint8_t horizon, int holes)
    {
        const std::int64_t index = unwrap_seq(horizon, s_.tx_base);
        const auto end = static_cast<std::size_t>(
            std::clamp<std::int64_t>(index, static_cast<std::int64_t>(s_.tx_base),
                                     static_cast<std::int64_t>(s_.tx_chunks.size())));
        // A hole whose RETRANSMIT was lost could sit anywhere between its
        // neighbours, so nothing in that span is acknowledged.
        std::vector<bool> unsure(end - s_.tx_base, false);
        std::size_t lo = s_.tx_base;
        for (int k = 1; k <= holes; ++k) {
            if (auto it = s_.tx_holes.find(k); it != s_.tx_holes.end()) {
                lo = it->second + 1;
                continue;
            }
            std::size_t hi = end;
            for (auto it = s_.tx_holes.upper_bound(k); it != s_.tx_holes.end(); ++it)
                if (it->first <= holes) {
                    hi = it->second;
                    break;
                }
            for (std::size_t i = std::max(lo, s_.tx_base); i < std::min(hi, end); ++i)
                unsure[i - s_.tx_base] = true;
        }
        for (std::size_t i = s_.tx_base; i < end; ++i) {
            const bool named = std::any_of(s_.tx_holes.begin(), s_.tx_holes.end(),
                                           [i](const auto& h) { return h.second == i; });
            if (!named && !unsure[i - s_.tx_base])
                s_.tx_acked[i] = true;
        }
        while (s_.tx_base < s_.tx_chunks.size() && s_.tx_acked[s_.tx_base])
            ++s_.tx_base;
    }

    // The receiver's word on a hole overrides any earlier ACK.
    void mark_missing(int ordinal, std::uint8_t seq)
    {
        const std::int64_t index = unwrap_seq(seq, s_.tx_base);
        if (index < 0 || index >= static_cast<std::int64_t>(s_.tx_chunks.size()))
            return;
        const auto i = static_cast<std::size_t>(index);
        s_.tx_acked[i] = false;
        s_.tx_holes[ordinal] = i;
        s_.tx_base = std::min(s_.tx_base, i);
    }

    void restart_send()
    {
        std::fill(s_.tx_acked.begin(), s_.tx_acked.end(), false);
        s_.tx_holes.clear();
        s_.tx_base = 0;
    }

    // The peer's preamble locked at our alternate rate: follow it.
    void adopt_rate(double peer_rate)
    {
        const double old = s_.bit_rate_current;
        s_.bit_rate_current = peer_rate;
        s_.bit_rate_alternate = old;
        if (s_.proposed_change) {
            const auto dir = *s_.proposed_change;
            s_.proposed_change.reset();
            out_.push_back(AdjustBitrate{dir, peer_rate});
        } else {
            out_.push_back(AdjustBitrate{peer_rate > old ? BitrateDirection::inc : BitrateDirection::dec, peer_rate});
        }
    }

    void commit_rate_change(BitrateDirection dir)
    {
        const double old = s_.bit_rate_current;
        s_ = adapt_bitrate(std::move(s_), dir);
        s_.bit_rate_alternate = old;
        s_.proposed_change.reset();
        out_.push_back(AdjustBitrate{dir, s_.bit_rate_current});
    }

    std::optional<BitrateDirection> choose_proposal()
    {
        if (!s_.cfg.adaptive_bitrate || s_.proposed_change || !s_.rx_is_receiver)
            return std::nullopt;
        const int total = s_.rx_batch_frames + s_.rx_batch_errors;
        if (total < 4)
            return std::nullopt;
        if (2 * s_.rx_batch_errors > total) {
            s_.clean_batches = 0;
            const double next = clamp_rate(s_.cfg, rate() / 1.05);
            if (next < rate() && turn_fits_data(s_.cfg, next))
                return BitrateDirection::dec;
            return std::nullopt;
        }
        if (s_.rx_batch_errors != 0) {
            s_.clean_batches = 0;
            return std::nullopt;
        }
        if (++s_.clean_batches < 3)
            return std::nullopt;
        s_.clean_batches = 0;
        if (clamp_rate(s_.cfg, rate() * 1.05) > rate())
            return BitrateDirection::inc;
        return std::nullopt;
    }

    void begin_hold()
    {
        cancel_timer(TimerKind::silence);
        cancel_timer(TimerKind::acquire_guard);
        s_.phase = Phase::holding_token;
        s_.peer_turn_heard.reset();
        s_.token_acquired_at = now_;
        s_.token_deadline = now_ + from_seconds(s_.cfg.t_max_s);
        s_.tx_next = s_.tx_base;
        s_.tx_holes.clear();
        s_.status_sent = false;
        s_.status_queue.clear();
        if (s_.proposed_change && s_.proposal_sent) {
            // Unanswered proposal: the peer may or may not have switched, so
            // keep decoding at both rates.
            s_.bit_rate_alternate = adapt_bitrate(s_, *s_.proposed_change).bit_rate_current;
            s_.proposed_change.reset();
        }
        s_.proposal_sent = false;
        to_speaker();
        transmit(control(MessageKind::acquire, next_seq()));
        set_timer(TimerKind::tx_slot, 0.0);
    }

    // True when a frame started now still leaves room for the RELEASE.
    bool fits() const
    {
        const SimTime air = frame_air_time(s_.cfg, rate());
        const SimTime gap = gap_time(s_.cfg, rate());
        return now_ + air + gap + air <= s_.token_deadline;
    }

    void next_transmission()
    {
        if (s_.change_to_ack && fits()) {
            const BitrateDirection dir = *s_.change_to_ack;
            s_.change_to_ack.reset();
            transmit(control(MessageKind::ack_ok, static_cast<std::uint8_t>(AckSubject::bitrate),
                             static_cast<std::uint16_t>(dir)));
            const double old = s_.bit_rate_current;
            s_ = adapt_bitrate(std::move(s_), dir);
            s_.bit_rate_alternate = old;
            out_.push_back(AdjustBitrate{dir, s_.bit_rate_current});
            set_timer(TimerKind::tx_slot, 0.0);
            return;
        }
        const bool reports = s_.rx_data_seen || (s_.rx_is_receiver && s_.tx_chunks.empty());
        if (reports && !s_.status_sent && fits()) {
            if (s_.status_queue.empty())
                build_status();
            transmit(s_.status_queue.front());
            s_.status_queue.erase(s_.status_queue.begin());
            if (!s_.status_queue.empty()) {
                set_timer(TimerKind::tx_slot, 0.0);
                return;
            }
            s_.status_sent = true;
            if (auto proposal = choose_proposal()) {
                s_.proposed_change = proposal;
                s_.proposal_sent = false;
            }
            s_.rx_batch_frames = 0;
            s_.rx_batch_errors = 0;
            set_timer(TimerKind::tx_slot, 0.0);
            return;
        }
        if (s_.proposed_change && !s_.proposal_sent && fits()) {
            s_.proposal_sent = true;
            transmit(control(*s_.proposed_change == BitrateDirection::inc ? MessageKind::bitrate_inc
                                                                          : MessageKind::bitrate_dec,
                             next_seq()));
            set_timer(TimerKind::tx_slot, 0.0);
            return;
        }
        while (s_.tx_next < s_.tx_chunks.size() && s_.tx_acked[s_.tx_next])
            ++s_.tx_next;
        if (s_.tx_next < s_.tx_chunks.size() && s_.tx_next - s_.tx_base < kSendWindow && fits()) {
            const std::size_t i = s_.tx_next++;
            transmit({MessageKind::data, 0, static_cast<std::uint8_t>(i & 0xff), s_.tx_chunks[i]});
            set_timer(TimerKind::tx_slot, 0.0);
            return;
        }
        release();
    }

    void release()
    {
        transmit(control(MessageKind::release, next_seq()));
        to_mic();
        s_.phase = Phase::listening;
        s_.token_acquired_at = -1;
        s_.token_deadline = -1;
        set_timer(TimerKind::silence, silence_timeout_s(s_));
    }
};

} // namespace

SimTime from_seconds(double s) { return static_cast<SimTime>(std::llround(s * 1e6)); }
double to_seconds(SimTime t) { return static_cast<double>(t) / 1e6; }

std::string_view to_string(Phase p)
{
    switch (p) {
    case Phase::discovering: return "DISCOVERING";
    case Phase::discovered: return "DISCOVERED";
    case Phase::idle: return "IDLE";
    case Phase::holding_token: return "HOLDING_TOKEN";
    case Phase::listening: return "LISTENING";
    }
    return "?";
}

std::string_view to_string(Role r) { return r == Role::speaker ? "SPEAKER" : "MIC"; }

std::string_view to_string(TimerKind k)
{
    switch (k) {
    case TimerKind::discovery_backoff: return "discovery_backoff";
    case TimerKind::discovery_ack_wait: return "discovery_ack_wait";
    case TimerKind::discovery_reply: return "discovery_reply";
    case TimerKind::acquire_guard: return "acquire_guard";
    case TimerKind::tx_slot: return "tx_slot";
    case TimerKind::silence: return "silence";
    }
    return "?";
}

SimTime frame_air_time(const NodeConfig& cfg, double bit_rate)
{
    const double seconds = static_cast<double>(framing::kFrameBits * slot_samples(cfg, bit_rate)) / cfg.sample_rate;
    return from_seconds(seconds);
}

SimTime gap_time(const NodeConfig& cfg, double bit_rate)
{
    const double seconds = static_cast<double>(cfg.gap_slots * slot_samples(cfg, bit_rate)) / cfg.sample_rate;
    return from_seconds(seconds);
}

void validate(const NodeConfig& cfg)
{
    if (!(cfg.bit_rate > 0.0) || !(cfg.min_bit_rate > 0.0) || cfg.min_bit_rate > cfg.max_bit_rate)
        throw ConfigError(cfg.name + ": invalid bit rate range");
    if (cfg.bit_rate < cfg.min_bit_rate || cfg.bit_rate > cfg.max_bit_rate)
        throw ConfigError(cfg.name + ": bit rate outside [min_bit_rate, max_bit_rate]");
    if (!(cfg.t_max_s > 0.0) || cfg.retask_latency_s < 0.0 || cfg.discovery_backoff_max_s < 0.0 ||
        !(cfg.discovery_ack_wait_s > 0.0) || cfg.turnaround_margin_s < 0.0)
        throw ConfigError(cfg.name + ": durations must be positive");
    if (cfg.discovery_ack_copies == 0)
        throw ConfigError(cfg.name + ": discovery_ack_copies must be at least 1");
    if (cfg.sample_rate <= 0)
        throw ConfigError(cfg.name + ": sample rate must be positive");
    if (cfg.mode == Mode::bidirectional && !cfg.reversible)
        throw ConfigError(cfg.name + ": bidirectional mode needs a reversible transducer");
    if (cfg.mode == Mode::unidirectional_rx && !cfg.reversible)
        throw ConfigError(cfg.name + ": a receiver needs a reversible transducer");
    if (cfg.mode == Mode::bidirectional && !turn_fits_data(cfg, cfg.bit_rate))
        throw ConfigError(cfg.name + ": t_max_s too short to carry a DATA frame at " +
                          std::to_string(cfg.bit_rate) + " bit/s");
}

NodeState make_node(const NodeConfig& cfg, std::vector<std::uint8_t> payload)
{
    validate(cfg);
    NodeState s;
    s.cfg = cfg;
    s.rng.seed(cfg.seed);
    s.node_id = cfg.forced_id ? *cfg.forced_id : static_cast<std::uint8_t>(s.rng() & 0xff);
    s.bit_rate_current = cfg.bit_rate;
    if (!payload.empty())
        s.tx_chunks = framing::pack_chunks(payload);
    s.tx_acked.assign(s.tx_chunks.size(), false);
    switch (cfg.mode) {
    case Mode::bidirectional:
        s.phase = Phase::discovering;
        s.transducer_role = Role::mic;
        break;
    case Mode::unidirectional_tx:
        s.phase = Phase::idle;
        s.transducer_role = cfg.reversible ? Role::mic : Role::speaker;
        break;
    case Mode::unidirectional_rx:
        s.phase = Phase::listening;
        s.transducer_role = Role::mic;
        break;
    }
    return s;
}

SimTime event_time(const LinkEvent& e)
{
    return std::visit([](const auto& v) { return v.time; }, e);
}

StepResult step(NodeState state, const LinkEvent& event)
{
    const SimTime now = event_time(event);
    if (now < state.last_event)
        throw ProtocolError(state.cfg.name + ": event at " + std::to_string(now) + " us precedes last event at " +
                            std::to_string(state.last_event) + " us");
    state.last_event = now;
    std::vector<LinkAction> actions;
    Machine m(state, actions, now);
    std::visit([&](const auto& e) { m.on(e); }, event);
    return {std::move(state), std::move(actions)};
}

NodeState adapt_bitrate(NodeState state, BitrateDirection direction)
{
    if (state.phase == Phase::discovering)
        throw ProtocolError(state.cfg.name + ": bitrate change before discovery completed");
    const double next = direction == BitrateDirection::inc ? state.bit_rate_current * 1.05
                                                           : state.bit_rate_current / 1.05;
    state.bit_rate_current = clamp_rate(state.cfg, next);
    return state;
}

double silence_timeout_s(const NodeState& state)
{
    const auto& cfg = state.cfg;
    const double guard = cfg.retask_latency_s + to_seconds(gap_time(cfg, state.bit_rate_current)) +
                         cfg.turnaround_margin_s;
    const double first = cfg.t_max_s + guard + 2.0;
    const bool recovers_first = state.peer_id && state.node_id > *state.peer_id;
    return recovers_first ? first : first + 2.0 * cfg.t_max_s + guard + 2.0;
}

} // namespace mosquito::link
