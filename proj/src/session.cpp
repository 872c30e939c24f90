#include "mosquito/session.hpp"

#include "mosquito/analysis.hpp"
#include "mosquito/error.hpp"
#include "mosquito/stream.hpp"
#include "mosquito/wav.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

namespace mosquito::session {

using framing::ControlMessage;
using framing::MessageKind;
using json = nlohmann::json;

namespace {

constexpr std::size_t kLeadSlots = 4;
constexpr std::size_t kTailSlots = 4;
constexpr SimTime kOpen = std::numeric_limits<SimTime>::max();
constexpr std::size_t kTimerKinds = 6;

std::string describe(const ControlMessage& m)
{
    std::ostringstream os;
    os << framing::to_string(m.kind) << " sender=" << int(m.sender_id) << " seq=" << int(m.seq)
       << " body=" << m.body;
    return os.str();
}

struct Node {
    link::NodeState state;
    NodeLog log;
    SimTime busy_until = 0;
    SimTime last_tx_end = 0;
    std::array<std::uint64_t, kTimerKinds> timer_gen{};
    std::optional<SimTime> hold_start;
    SampleBuffer heard;
};

struct Queued {
    SimTime time;
    std::uint64_t seq;
    int node;
    enum class Type { tick, timeout, arrival } type;
    link::TimerKind timer = link::TimerKind::tx_slot;
    std::uint64_t gen = 0;
    std::size_t frame = 0;

    bool operator>(const Queued& o) const { return std::tie(time, seq) > std::tie(o.time, o.seq); }
};

void start_role(Node& n, SimTime at, std::string role)
{
    if (!n.log.roles.empty())
        n.log.roles.back().end = at;
    n.log.roles.push_back({at, kOpen, std::move(role)});
}

bool mic_throughout(const Node& n, SimTime a, SimTime b)
{
    for (auto it = n.log.roles.rbegin(); it != n.log.roles.rend(); ++it) {
        if (it->end <= a)
            break;
        if (it->start < b && it->role != "MIC")
            return false;
    }
    return true;
}

ModemConfig at_rate(const ModemConfig& base, double rate)
{
    ModemConfig m = base;
    m.bit_rate = rate;
    return m;
}

// Places src into dst starting at sample `at` (may be negative), growing dst.
void overlay(std::vector<double>& dst, const std::vector<double>& src, std::int64_t at)
{
    const std::int64_t first = std::max<std::int64_t>(0, -at);
    if (first >= static_cast<std::int64_t>(src.size()))
        return;
    const auto need = static_cast<std::size_t>(at + static_cast<std::int64_t>(src.size()));
    if (dst.size() < need)
        dst.resize(need, 0.0);
    for (auto i = static_cast<std::size_t>(first); i < src.size(); ++i)
        dst[static_cast<std::size_t>(at + static_cast<std::int64_t>(i))] += src[i];
}

class Simulator {
public:
    explicit Simulator(const SessionConfig& cfg) : cfg_(cfg)
    {
        if (cfg.payload.empty())
            throw ArgumentError("empty payload");
        if (!(cfg.options.budget_s > 0.0))
            throw ConfigError("session budget must be positive");
        channel::validate(cfg.channel);
        if (cfg.channel.sample_rate != cfg.modem.sample_rate)
            throw ConfigError("channel and modem sample rates differ");
        const std::array<const link::NodeConfig*, 2> ncfg{&cfg.a, &cfg.b};
        for (int i = 0; i < 2; ++i) {
            link::NodeConfig c = *ncfg[i];
            if (c.mode != link::Mode::bidirectional)
                throw ConfigError(c.name + ": run_session needs bidirectional nodes");
            if (c.sample_rate != cfg.modem.sample_rate)
                throw ConfigError(c.name + ": sample rate differs from the modem");
            validate(at_rate(cfg.modem, c.bit_rate));
            c.seed = channel::mix_seed(cfg.seed ^ c.seed, static_cast<std::uint64_t>(11 + i));
            Node& n = nodes_[i];
            n.state = link::make_node(c, i == 0 ? cfg.payload : std::vector<std::uint8_t>{});
            n.log.name = c.name;
            n.log.initial_id = n.state.node_id;
            n.log.t_max_s = c.t_max_s;
            n.log.phases.push_back({0, n.state.phase});
            start_role(n, 0, std::string(link::to_string(n.state.transducer_role)));
        }
        delay_ = link::from_seconds(channel::propagation_delay_s(cfg.channel));
    }

    SessionTrace run()
    {
        for (int i = 0; i < 2; ++i)
            push({0, 0, i, Queued::Type::tick});
        const SimTime budget = link::from_seconds(cfg_.options.budget_s);
        SimTime now = 0;
        bool complete = false;
        while (!queue_.empty()) {
            const Queued q = queue_.top();
            if (q.time > budget)
                break;
            queue_.pop();
            now = q.time;
            dispatch(q);
            if (finished(now)) {
                complete = true;
                if (cfg_.options.stop_when_delivered)
                    break;
            }
        }
        if (!complete && !queue_.empty())
            now = budget;
        return finish(now, complete);
    }

private:
    const SessionConfig& cfg_;
    std::array<Node, 2> nodes_;
    std::priority_queue<Queued, std::vector<Queued>, std::greater<>> queue_;
    std::uint64_t next_seq_ = 0;
    std::vector<FrameRecord> frames_;
    std::vector<std::uint8_t> delivered_;
    std::optional<SimTime> complete_at_;
    SimTime delay_ = 0;

    void push(Queued q)
    {
        q.seq = next_seq_++;
        queue_.push(q);
    }

    bool finished(SimTime now)
    {
        const auto& a = nodes_[0].state;
        if (!complete_at_ && nodes_[1].state.delivered && a.tx_base == a.tx_chunks.size())
            complete_at_ = now;
        return complete_at_.has_value();
    }

    void dispatch(const Queued& q)
    {
        Node& n = nodes_[q.node];
        switch (q.type) {
        case Queued::Type::tick:
            deliver(q.node, link::ScheduleTick{q.time}, "tick", "");
            break;
        case Queued::Type::timeout:
            if (n.timer_gen[static_cast<std::size_t>(q.timer)] != q.gen)
                return;
            deliver(q.node, link::Timeout{q.time, q.timer}, "timeout", std::string(link::to_string(q.timer)));
            break;
        case Queued::Type::arrival:
            arrival(q.node, q.time, frames_[q.frame]);
            break;
        }
    }

    void deliver(int idx, const link::LinkEvent& ev, std::string what, std::string detail)
    {
        Node& n = nodes_[idx];
        const SimTime now = link::event_time(ev);
        n.log.events.push_back({now, std::move(what), std::move(detail)});
        const link::Phase before = n.state.phase;
        auto result = link::step(std::move(n.state), ev);
        n.state = std::move(result.state);
        if (before != link::Phase::holding_token && n.state.phase == link::Phase::holding_token)
            n.hold_start = now;
        execute(idx, now, result.actions);
        if (before == link::Phase::holding_token && n.state.phase != link::Phase::holding_token && n.hold_start) {
            n.log.holds.push_back({*n.hold_start, std::max(now, n.last_tx_end)});
            n.hold_start.reset();
        }
        if (n.state.phase != before) {
            n.log.phases.push_back({now, n.state.phase});
            if (before == link::Phase::discovering && !n.log.discovered_at)
                n.log.discovered_at = now;
        }
    }

    void execute(int idx, SimTime now, const std::vector<link::LinkAction>& actions)
    {
        Node& n = nodes_[idx];
        SimTime cursor = std::max(now, n.busy_until);
        for (const auto& action : actions) {
            std::visit(
                [&](const auto& a) {
                    using T = std::decay_t<decltype(a)>;
                    if constexpr (std::is_same_v<T, link::Retask>) {
                        const SimTime lat = link::from_seconds(a.latency_s);
                        n.log.actions.push_back({cursor, "retask", std::string(link::to_string(a.role))});
                        start_role(n, cursor, "RETASKING");
                        cursor += lat;
                        start_role(n, cursor, std::string(link::to_string(a.role)));
                    } else if constexpr (std::is_same_v<T, link::Transmit>) {
                        n.log.actions.push_back({cursor, "transmit", describe(a.msg)});
                        const SimTime air = link::frame_air_time(n.state.cfg, a.bit_rate);
                        FrameRecord f;
                        f.id = frames_.size();
                        f.from = idx;
                        f.msg = a.msg;
                        f.bit_rate = a.bit_rate;
                        f.start = cursor;
                        f.end = cursor + air;
                        f.arrival_start = f.start + delay_;
                        f.arrival_end = f.end + delay_;
                        frames_.push_back(f);
                        push({f.arrival_end, 0, 1 - idx, Queued::Type::arrival, {}, 0, f.id});
                        n.last_tx_end = f.end;
                        cursor += air + link::gap_time(n.state.cfg, a.bit_rate);
                    } else if constexpr (std::is_same_v<T, link::SetTimer>) {
                        const auto k = static_cast<std::size_t>(a.kind);
                        const std::uint64_t gen = ++n.timer_gen[k];
                        push({cursor + link::from_seconds(a.delay_s), 0, idx, Queued::Type::timeout, a.kind, gen});
                        n.log.actions.push_back({cursor, "set_timer",
                                                 std::string(link::to_string(a.kind)) + " " + std::to_string(a.delay_s)});
                    } else if constexpr (std::is_same_v<T, link::CancelTimer>) {
                        ++n.timer_gen[static_cast<std::size_t>(a.kind)];
                        n.log.actions.push_back({cursor, "cancel_timer", std::string(link::to_string(a.kind))});
                    } else if constexpr (std::is_same_v<T, link::DeliverData>) {
                        delivered_ = a.bytes;
                        n.log.actions.push_back({cursor, "deliver", std::to_string(a.bytes.size()) + " bytes"});
                    } else if constexpr (std::is_same_v<T, link::AdjustBitrate>) {
                        n.log.actions.push_back({cursor, "adjust_bitrate", std::to_string(a.new_rate)});
                    }
                },
                action);
        }
        n.busy_until = cursor;
    }

    void arrival(int idx, SimTime now, FrameRecord& f)
    {
        Node& rx = nodes_[idx];
        if (!mic_throughout(rx, f.arrival_start, f.arrival_end)) {
            f.reception = Reception::deaf;
            return;
        }
        const ModemConfig tx_modem = at_rate(cfg_.modem, f.bit_rate);
        const std::size_t spb = tx_modem.samples_per_bit();
        const std::size_t lead = kLeadSlots * spb;
        const auto bits = framing::encode_frame(framing::encode_message(f.msg));
        const auto audio = modulate(bits, tx_modem);
        SampleBuffer window{std::vector<double>(lead + audio.size() + kTailSlots * spb, 0.0), cfg_.modem.sample_rate};
        std::copy(audio.samples.begin(), audio.samples.end(), window.samples.begin() + static_cast<std::ptrdiff_t>(lead));

        channel::ChannelModel model = cfg_.channel;
        model.apply_delay = false;
        model.seed = channel::mix_seed(cfg_.seed, 1000 + f.id);
        SampleBuffer heard = channel::propagate(window, model);
        if (cfg_.options.receiver_lowpass)
            heard = analysis::lowpass_filter(heard, *cfg_.options.receiver_lowpass);
        if (cfg_.options.quantize_pcm16)
            quantize_pcm16(heard);
        if (cfg_.options.record_audio) {
            const auto at = static_cast<std::int64_t>(std::llround(link::to_seconds(f.arrival_start) * cfg_.modem.sample_rate)) -
                             static_cast<std::int64_t>(lead);
            rx.heard.sample_rate = cfg_.modem.sample_rate;
            overlay(rx.heard.samples, heard.samples, at);
        }

        std::vector<double> rates{rx.state.bit_rate_current};
        if (rx.state.bit_rate_alternate && *rx.state.bit_rate_alternate != rx.state.bit_rate_current)
            rates.push_back(*rx.state.bit_rate_alternate);
        for (double r : rates) {
            if (auto got = receive_frame(heard, at_rate(cfg_.modem, r))) {
                f.reception = Reception::decoded;
                f.decoded = got->msg;
                f.undetected_corruption = got->msg != f.msg;
                deliver(idx, link::FrameReceived{now, got->msg, r}, "frame_received", describe(got->msg));
                return;
            }
        }
        if (carrier_present(heard, at_rate(cfg_.modem, rates.front()), lead, lead + audio.size())) {
            f.reception = Reception::corrupted;
            deliver(idx, link::FrameCorrupted{now}, "frame_corrupted", "");
        } else {
            f.reception = Reception::undetected;
        }
    }

    SessionTrace finish(SimTime end, bool complete)
    {
        SessionTrace t;
        t.mode = "bidirectional";
        t.seed = cfg_.seed;
        for (int i = 0; i < 2; ++i) {
            Node& n = nodes_[i];
            if (n.hold_start)
                n.log.holds.push_back({*n.hold_start, std::max(end, n.last_tx_end)});
            if (!n.log.roles.empty())
                n.log.roles.back().end = std::max(end, n.log.roles.back().start);
            n.log.final_id = n.state.node_id;
            n.log.discovery_rounds = n.state.discovery_rounds;
            n.log.id_rerandomizations = n.state.id_rerandomizations;
            n.log.final_bit_rate = n.state.bit_rate_current;
            t.nodes[i] = std::move(n.log);
            t.heard[i] = std::move(n.heard);
        }
        t.frames = std::move(frames_);
        t.delivered = std::move(delivered_);

        Summary& s = t.summary;
        s.complete = complete;
        s.payload_bytes = cfg_.payload.size();
        s.delivered_bytes = t.delivered.size();
        s.delivered = t.delivered == cfg_.payload;
        s.duration_s = link::to_seconds(complete_at_.value_or(end));
        fill_frame_counts(t);
        const SimTime phase_end = complete_at_.value_or(end);
        fill_data_phase(t, phase_end, complete);
        for (const auto& n : t.nodes) {
            s.discovery_rounds += n.discovery_rounds;
            s.id_rerandomizations += n.id_rerandomizations;
        }
        return t;
    }

public:
    static void fill_frame_counts(SessionTrace& t)
    {
        Summary& s = t.summary;
        s.frames = t.frames.size();
        for (const auto& f : t.frames) {
            s.data_frames += f.msg.kind == MessageKind::data;
            s.retransmits += f.msg.kind == MessageKind::retransmit;
            s.corrupted_frames += f.reception == Reception::corrupted;
            s.undetected_corruptions += f.undetected_corruption;
        }
    }

    static void fill_data_phase(SessionTrace& t, SimTime phase_end, bool complete)
    {
        Summary& s = t.summary;
        std::optional<SimTime> first;
        std::size_t in_phase = 0;
        for (const auto& f : t.frames) {
            if (f.msg.kind != MessageKind::data || f.start > phase_end)
                continue;
            if (!first)
                first = f.start;
            ++in_phase;
        }
        if (!first || phase_end <= *first)
            return;
        s.data_phase_s = link::to_seconds(phase_end - *first);
        // rate * (32/46) * (16/32) * fraction of the phase spent on DATA air time
        s.protocol_efficiency_bound_bps = 16.0 * static_cast<double>(in_phase) / s.data_phase_s;
        if (complete)
            s.goodput_bps = 8.0 * static_cast<double>(s.payload_bytes) / s.data_phase_s;
    }
};

json entry_json(const LogEntry& e)
{
    return {{"t_us", e.time}, {"type", e.what}, {"detail", e.detail}};
}

json message_json(const ControlMessage& m)
{
    return {{"kind", framing::to_string(m.kind)}, {"sender", m.sender_id}, {"seq", m.seq}, {"body", m.body}};
}

} // namespace

std::string_view to_string(Reception r)
{
    switch (r) {
    case Reception::decoded: return "decoded";
    case Reception::corrupted: return "corrupted";
    case Reception::undetected: return "undetected";
    case Reception::deaf: return "deaf";
    }
    return "?";
}

SessionTrace run_session(const SessionConfig& cfg)
{
    Simulator sim(cfg);
    return sim.run();
}

SessionTrace unidirectional_schedule(const UnidirectionalConfig& cfg)
{
    if (cfg.payload.empty())
        throw ArgumentError("empty payload");
    if (cfg.tx.mode != link::Mode::unidirectional_tx || cfg.tx.reversible)
        throw ConfigError(cfg.tx.name + ": transmitter must be a non-reversible unidirectional_tx node");
    if (cfg.rx.mode != link::Mode::unidirectional_rx || !cfg.rx.reversible)
        throw ConfigError(cfg.rx.name + ": receiver must be a reversible unidirectional_rx node");
    if (cfg.start_time_s < 0.0 || cfg.guard_s < 0.0)
        throw ConfigError("start time and guard must be non-negative");
    channel::validate(cfg.channel);
    if (cfg.channel.sample_rate != cfg.modem.sample_rate)
        throw ConfigError("channel and modem sample rates differ");
    const ModemConfig tx_modem = at_rate(cfg.modem, cfg.tx.bit_rate);
    const ModemConfig rx_modem = at_rate(cfg.modem, cfg.rx.bit_rate);
    validate(tx_modem);
    validate(rx_modem);

    SessionTrace t;
    t.mode = "unidirectional";
    t.seed = cfg.seed;
    link::NodeConfig tx_cfg = cfg.tx;
    link::NodeConfig rx_cfg = cfg.rx;
    tx_cfg.seed = channel::mix_seed(cfg.seed ^ tx_cfg.seed, 11);
    rx_cfg.seed = channel::mix_seed(cfg.seed ^ rx_cfg.seed, 12);
    auto tx = link::make_node(tx_cfg, cfg.payload);
    auto rx = link::make_node(rx_cfg);

    const SimTime start = link::from_seconds(cfg.start_time_s);
    const SimTime delay = link::from_seconds(channel::propagation_delay_s(cfg.channel));
    const SimTime record_from = link::from_seconds(cfg.record_from_s.value_or(cfg.start_time_s - cfg.guard_s));

    NodeLog& tl = t.nodes[0];
    tl.name = tx_cfg.name;
    tl.initial_id = tl.final_id = tx.node_id;
    tl.t_max_s = tx_cfg.t_max_s;
    tl.phases.push_back({0, tx.phase});
    tl.events.push_back({start, "tick", ""});
    auto result = link::step(std::move(tx), link::ScheduleTick{start});
    tx = std::move(result.state);
    SimTime cursor = start;
    for (const auto& action : result.actions) {
        const auto* send = std::get_if<link::Transmit>(&action);
        if (!send)
            continue;
        tl.actions.push_back({cursor, "transmit", describe(send->msg)});
        FrameRecord f;
        f.id = t.frames.size();
        f.from = 0;
        f.msg = send->msg;
        f.bit_rate = send->bit_rate;
        f.start = cursor;
        f.end = cursor + link::frame_air_time(tx_cfg, send->bit_rate);
        f.arrival_start = f.start + delay;
        f.arrival_end = f.end + delay;
        t.frames.push_back(f);
        cursor = f.end + link::gap_time(tx_cfg, send->bit_rate);
    }
    tl.roles.push_back({0, cursor, "SPEAKER"});
    tl.final_bit_rate = tx.bit_rate_current;

    const SimTime record_end = (t.frames.empty() ? cursor : t.frames.back().arrival_end) + link::kSecond;
    const int fs = cfg.modem.sample_rate;
    auto to_sample = [&](SimTime at) {
        return static_cast<std::int64_t>(std::llround(link::to_seconds(at - record_from) * fs));
    };
    SampleBuffer recording{std::vector<double>(static_cast<std::size_t>(std::max<std::int64_t>(1, to_sample(record_end))), 0.0), fs};
    for (const auto& f : t.frames) {
        const auto audio = modulate(framing::encode_frame(framing::encode_message(f.msg)), at_rate(cfg.modem, f.bit_rate));
        overlay(recording.samples, audio.samples, to_sample(f.arrival_start));
    }
    recording.samples.resize(static_cast<std::size_t>(std::max<std::int64_t>(1, to_sample(record_end))));
    channel::ChannelModel model = cfg.channel;
    model.apply_delay = false;
    model.seed = channel::mix_seed(cfg.seed, 77);
    SampleBuffer heard = channel::propagate(recording, model);
    if (cfg.options.receiver_lowpass)
        heard = analysis::lowpass_filter(heard, *cfg.options.receiver_lowpass);
    if (cfg.options.quantize_pcm16)
        quantize_pcm16(heard);

    NodeLog& rl = t.nodes[1];
    rl.name = rx_cfg.name;
    rl.initial_id = rl.final_id = rx.node_id;
    rl.t_max_s = rx_cfg.t_max_s;
    rl.phases.push_back({0, rx.phase});
    rl.roles.push_back({record_from, record_end, "MIC"});

    const auto scan = scan_frames(heard, rx_modem);
    for (const auto& got : scan.frames) {
        const SimTime at = record_from + link::from_seconds(static_cast<double>(got.end) / fs);
        const SimTime lock = record_from + link::from_seconds(static_cast<double>(got.offset) / fs);
        rl.events.push_back({at, "frame_received", describe(got.msg)});
        auto r = link::step(std::move(rx), link::FrameReceived{at, got.msg, rx_modem.bit_rate});
        rx = std::move(r.state);
        for (const auto& action : r.actions)
            if (const auto* d = std::get_if<link::DeliverData>(&action)) {
                t.delivered = d->bytes;
                rl.actions.push_back({at, "deliver", std::to_string(d->bytes.size()) + " bytes"});
            }
        const SimTime slot = link::from_seconds(rx_modem.slot_seconds());
        for (auto& f : t.frames)
            if (f.reception != Reception::decoded && std::llabs(f.arrival_start - lock) <= slot) {
                f.reception = Reception::decoded;
                f.decoded = got.msg;
                f.undetected_corruption = got.msg != f.msg;
                break;
            }
    }
    for (auto& f : t.frames)
        if (f.arrival_start < record_from && f.reception != Reception::decoded)
            f.reception = Reception::deaf;
    rl.final_bit_rate = rx.bit_rate_current;
    if (cfg.options.record_audio)
        t.heard[1] = std::move(heard);

    Summary& s = t.summary;
    s.payload_bytes = cfg.payload.size();
    s.delivered_bytes = t.delivered.size();
    s.delivered = t.delivered == cfg.payload;
    s.complete = s.delivered;
    s.duration_s = link::to_seconds(record_end);
    Simulator::fill_frame_counts(t);
    s.corrupted_frames = scan.rejected_locks;
    Simulator::fill_data_phase(t, t.frames.empty() ? 0 : t.frames.back().arrival_end, s.complete);
    return t;
}

std::size_t token_exclusivity_violations(const SessionTrace& t)
{
    std::size_t v = 0;
    for (const auto& a : t.nodes[0].holds)
        for (const auto& b : t.nodes[1].holds)
            v += a.start < b.end && b.start < a.end;
    return v;
}

std::size_t t_max_violations(const SessionTrace& t)
{
    std::size_t v = 0;
    for (const auto& n : t.nodes)
        for (const auto& h : n.holds)
            v += h.end - h.start > link::from_seconds(n.t_max_s);
    return v;
}

std::size_t half_duplex_violations(const SessionTrace& t)
{
    std::size_t v = 0;
    for (const auto& f : t.frames) {
        if (f.reception == Reception::deaf)
            continue;
        const int rx = 1 - f.from;
        bool clash = false;
        for (const auto& own : t.frames)
            if (own.from == rx && own.start < f.arrival_end && f.arrival_start < own.end)
                clash = true;
        for (const auto& r : t.nodes[rx].roles)
            if (r.role != "MIC" && r.start < f.arrival_end && f.arrival_start < r.end)
                clash = true;
        v += clash;
    }
    return v;
}

std::size_t ack_messages(const SessionTrace& t)
{
    std::size_t n = 0;
    for (const auto& f : t.frames)
        n += f.msg.kind == MessageKind::ack_ok || f.msg.kind == MessageKind::retransmit;
    return n;
}

json to_json(const SessionTrace& t)
{
    json j;
    j["schema_version"] = 1;
    j["mode"] = t.mode;
    j["seed"] = t.seed;
    json nodes = json::array();
    for (const auto& n : t.nodes) {
        json nj;
        nj["name"] = n.name;
        nj["initial_id"] = n.initial_id;
        nj["final_id"] = n.final_id;
        nj["t_max_s"] = n.t_max_s;
        nj["discovery_rounds"] = n.discovery_rounds;
        nj["id_rerandomizations"] = n.id_rerandomizations;
        nj["final_bit_rate"] = n.final_bit_rate;
        nj["discovered_at_us"] = n.discovered_at ? json(*n.discovered_at) : json(nullptr);
        json roles = json::array();
        for (const auto& r : n.roles)
            roles.push_back({{"start_us", r.start}, {"end_us", r.end}, {"role", r.role}});
        nj["roles"] = std::move(roles);
        json phases = json::array();
        for (const auto& p : n.phases)
            phases.push_back({{"t_us", p.time}, {"phase", link::to_string(p.phase)}});
        nj["phases"] = std::move(phases);
        json holds = json::array();
        for (const auto& h : n.holds)
            holds.push_back({{"start_us", h.start}, {"end_us", h.end}});
        nj["holds"] = std::move(holds);
        json events = json::array();
        for (const auto& e : n.events)
            events.push_back(entry_json(e));
        nj["events"] = std::move(events);
        json actions = json::array();
        for (const auto& a : n.actions)
            actions.push_back(entry_json(a));
        nj["actions"] = std::move(actions);
        nodes.push_back(std::move(nj));
    }
    j["nodes"] = std::move(nodes);
    json frames = json::array();
    for (const auto& f : t.frames) {
        json fj;
        fj["id"] = f.id;
        fj["from"] = f.from;
        fj["message"] = message_json(f.msg);
        fj["bit_rate"] = f.bit_rate;
        fj["start_us"] = f.start;
        fj["end_us"] = f.end;
        fj["arrival_start_us"] = f.arrival_start;
        fj["arrival_end_us"] = f.arrival_end;
        fj["reception"] = to_string(f.reception);
        fj["decoded"] = f.decoded ? message_json(*f.decoded) : json(nullptr);
        fj["undetected_corruption"] = f.undetected_corruption;
        frames.push_back(std::move(fj));
    }
    j["frames"] = std::move(frames);
    const Summary& s = t.summary;
    j["summary"] = {
        {"complete", s.complete},
        {"delivered", s.delivered},
        {"payload_bytes", s.payload_bytes},
        {"delivered_bytes", s.delivered_bytes},
        {"frames", s.frames},
        {"data_frames", s.data_frames},
        {"retransmits", s.retransmits},
        {"corrupted_frames", s.corrupted_frames},
        {"undetected_corruptions", s.undetected_corruptions},
        {"duration_s", s.duration_s},
        {"data_phase_s", s.data_phase_s},
        {"goodput_bps", s.goodput_bps},
        {"protocol_efficiency_bound_bps", s.protocol_efficiency_bound_bps},
        {"discovery_rounds", s.discovery_rounds},
        {"id_rerandomizations", s.id_rerandomizations},
        {"token_exclusivity_violations", token_exclusivity_violations(t)},
        {"t_max_violations", t_max_violations(t)},
        {"half_duplex_violations", half_duplex_violations(t)},
    };
    return j;
}

} // namespace mosquito::session
