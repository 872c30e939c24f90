#include <doctest.h>

#include "mosquito/config.hpp"
#include "mosquito/error.hpp"
#include "mosquito/session.hpp"

using namespace mosquito;
using namespace mosquito::session;

namespace {

const std::filesystem::path kPresets = MOSQUITO_SOURCE_DIR "/presets";

std::vector<std::uint8_t> bytes(std::size_t n, std::uint64_t salt)
{
    std::vector<std::uint8_t> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = static_cast<std::uint8_t>(i * 37 + salt * 11 + 5);
    return out;
}

SessionConfig two_node(const std::string& preset, std::size_t n, std::uint64_t seed)
{
    SessionConfig c;
    c.a.name = "A";
    c.b.name = "B";
    c.channel = config::load_channel_preset(preset, kPresets);
    c.payload = bytes(n, seed);
    c.seed = seed;
    return c;
}

void check_invariants(const SessionTrace& t)
{
    CHECK(token_exclusivity_violations(t) == 0);
    CHECK(t_max_violations(t) == 0);
    CHECK(half_duplex_violations(t) == 0);
}

std::size_t count(const SessionTrace& t, framing::MessageKind k)
{
    return static_cast<std::size_t>(
        std::count_if(t.frames.begin(), t.frames.end(), [k](const auto& f) { return f.msg.kind == k; }));
}

UnidirectionalConfig one_way(std::size_t n, std::uint64_t seed)
{
    UnidirectionalConfig c;
    c.tx.name = "TX";
    c.tx.mode = link::Mode::unidirectional_tx;
    c.tx.reversible = false;
    c.rx.name = "RX";
    c.rx.mode = link::Mode::unidirectional_rx;
    c.payload = bytes(n, seed);
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("noiseless kilobit session")
{
    const auto c = two_node("noiseless", 128, 1);
    const auto t = run_session(c);
    CHECK(t.summary.complete);
    CHECK(t.summary.delivered);
    CHECK(t.delivered == c.payload);
    CHECK(count(t, framing::MessageKind::retransmit) == 0);
    CHECK(t.summary.retransmits == 0);
    CHECK(t.summary.corrupted_frames == 0);
    CHECK(t.summary.data_frames == framing::chunk_count_for(128));
    check_invariants(t);
    CHECK(t.nodes[0].discovered_at);
    CHECK(t.nodes[1].discovered_at);
    CHECK(t.summary.goodput_bps <= t.summary.protocol_efficiency_bound_bps);
    CHECK(t.summary.goodput_bps >= 0.8 * t.summary.protocol_efficiency_bound_bps);
}

TEST_CASE("paper-3m sessions deliver byte-exactly")
{
    std::size_t retransmits = 0;
    std::size_t escapes = 0; // frames the CRC-8 let through; the payload checksum catches them
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        CAPTURE(seed);
        const auto c = two_node("paper-3m", 128, seed);
        const auto t = run_session(c);
        REQUIRE(t.summary.complete);
        CHECK(t.delivered == c.payload);
        CHECK(t.summary.delivered);
        check_invariants(t);
        escapes += t.summary.undetected_corruptions;
        retransmits += t.summary.retransmits;
    }
    CHECK(retransmits > 0);
    MESSAGE("undetected frame corruptions over 20 sessions: " << escapes);
}

TEST_CASE("forced id collision resolves with one re-randomization")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CAPTURE(seed);
        auto c = two_node("noiseless", 16, seed);
        c.a.forced_id = 77;
        c.b.forced_id = 77;
        const auto t = run_session(c);
        CHECK(t.summary.id_rerandomizations == 1);
        CHECK(t.nodes[0].id_rerandomizations + t.nodes[1].id_rerandomizations == 1);
        CHECK(t.nodes[0].final_id != t.nodes[1].final_id);
        CHECK(t.summary.complete);
        check_invariants(t);
    }
}

TEST_CASE("noiseless discovery finishes within ten rounds")
{
    int slow = 0;
    const int runs = 200;
    for (int seed = 0; seed < runs; ++seed) {
        auto c = two_node("noiseless", 4, static_cast<std::uint64_t>(seed));
        const auto t = run_session(c);
        const bool ok = t.nodes[0].discovered_at && t.nodes[1].discovered_at &&
                        std::max(t.nodes[0].discovery_rounds, t.nodes[1].discovery_rounds) <= 10;
        slow += !ok;
        REQUIRE(t.summary.complete);
    }
    CHECK(slow <= runs / 100);
}

TEST_CASE("sessions are deterministic")
{
    const auto c = two_node("paper-3m", 32, 9);
    const auto a = to_json(run_session(c));
    const auto b = to_json(run_session(c));
    CHECK(a.dump() == b.dump());
    auto d = c;
    d.seed = 10;
    CHECK(to_json(run_session(d)).dump() != a.dump());
}

TEST_CASE("low-pass at the receivers blocks discovery")
{
    auto c = two_node("paper-3m", 16, 3);
    c.options.receiver_lowpass = 18000.0;
    c.options.budget_s = 120.0;
    const auto t = run_session(c);
    CHECK_FALSE(t.summary.complete);
    CHECK_FALSE(t.nodes[0].discovered_at);
    CHECK_FALSE(t.nodes[1].discovered_at);
}

TEST_CASE("budget exhaustion flags the trace incomplete")
{
    auto c = two_node("noiseless", 128, 2);
    c.options.budget_s = 5.0;
    const auto t = run_session(c);
    CHECK_FALSE(t.summary.complete);
    CHECK(t.summary.duration_s <= 5.0 + 1e-9);
}

TEST_CASE("unidirectional delivery carries no control frames")
{
    const auto c = one_way(16, 4);
    const auto t = unidirectional_schedule(c);
    CHECK(t.mode == "unidirectional");
    CHECK(t.delivered == c.payload);
    CHECK(ack_messages(t) == 0);
    for (const auto& f : t.frames) {
        CHECK(f.from == 0);
        CHECK(f.msg.kind == framing::MessageKind::data);
        CHECK(f.reception == Reception::decoded);
    }
    CHECK(t.frames.front().start == link::from_seconds(c.start_time_s));
    check_invariants(t);
}

TEST_CASE("late receiver loses only the first frame")
{
    auto c = one_way(16, 5);
    c.record_from_s = c.start_time_s + 0.05; // inside the first preamble
    const auto t = unidirectional_schedule(c);
    REQUIRE(t.frames.size() == framing::chunk_count_for(16));
    CHECK(t.frames[0].reception != Reception::decoded);
    for (std::size_t i = 1; i < t.frames.size(); ++i)
        CHECK(t.frames[i].reception == Reception::decoded);
    CHECK(t.delivered.empty());
    CHECK(ack_messages(t) == 0);
}

TEST_CASE("unidirectional configuration checks")
{
    auto c = one_way(4, 1);
    c.tx.reversible = true;
    CHECK_THROWS_AS(unidirectional_schedule(c), ConfigError);
    c = one_way(4, 1);
    c.rx.mode = link::Mode::bidirectional;
    CHECK_THROWS_AS(unidirectional_schedule(c), ConfigError);
}

TEST_CASE("example configs load")
{
    const std::filesystem::path dir = MOSQUITO_SOURCE_DIR "/configs";
    for (const char* name : {"session-noiseless.json", "session-paper-3m.json", "unidirectional.json"}) {
        CAPTURE(name);
        CHECK_NOTHROW(config::session_from_json(config::load_file(dir / name), dir, kPresets));
    }
}
