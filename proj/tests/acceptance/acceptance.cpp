// One line per acceptance criterion; exit status 1 if any fails.

#include "mosquito/analysis.hpp"
#include "mosquito/channel.hpp"
#include "mosquito/cli.hpp"
#include "mosquito/config.hpp"
#include "mosquito/framing.hpp"
#include "mosquito/modem.hpp"
#include "mosquito/session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

using namespace mosquito;
namespace fs = std::filesystem;

namespace {

const fs::path kPresets = MOSQUITO_SOURCE_DIR "/presets";

// Frozen: undetected errors among all 1035 double flips of a frame.
constexpr std::size_t kDoubleFlipEscapes = 0;

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Report {
    int failed = 0;

    void run(int number, const char* title, double limit_s, const std::function<Verdict()>& body)
    {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = body();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = took < limit_s;
        const bool ok = v.pass && in_time;
        failed += !ok;
        std::printf("[%s] %d. %s: %s; %.1f s of %.0f s%s\n", ok ? "PASS" : "FAIL", number, title, v.detail.c_str(),
                    took, limit_s, in_time ? "" : " (too slow)");
        std::fflush(stdout);
    }
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Bits random_bits(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Bits b(n);
    for (auto& x : b)
        x = static_cast<std::uint8_t>(rng() & 1);
    return b;
}

std::vector<std::uint8_t> payload_for(std::uint64_t seed, std::size_t n)
{
    std::vector<std::uint8_t> p(n);
    for (std::size_t i = 0; i < n; ++i)
        p[i] = static_cast<std::uint8_t>(i * 37 + seed * 13 + 1);
    return p;
}

session::SessionConfig two_node(const std::string& preset, std::uint64_t seed, std::size_t bytes)
{
    session::SessionConfig c;
    c.a.name = "A";
    c.b.name = "B";
    c.channel = config::load_channel_preset(preset, kPresets);
    c.payload = payload_for(seed, bytes);
    c.seed = seed;
    return c;
}

Verdict frame_codec()
{
    std::mt19937 rng(2024);
    std::size_t roundtrip = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto p = static_cast<std::uint32_t>(rng());
        const auto d = framing::decode_frame(framing::encode_frame(p));
        roundtrip += d.ok() && d.payload == p;
    }
    const auto frame = framing::encode_frame(0x4D4F5351u);
    std::size_t singles = 0;
    for (std::size_t i = 0; i < frame.size(); ++i) {
        auto f = frame;
        f[i] ^= 1u;
        singles += !framing::decode_frame(f).ok();
    }
    std::size_t pairs = 0, escapes = 0;
    for (std::size_t i = 0; i < frame.size(); ++i)
        for (std::size_t j = i + 1; j < frame.size(); ++j) {
            auto f = frame;
            f[i] ^= 1u;
            f[j] ^= 1u;
            ++pairs;
            escapes += framing::decode_frame(f).ok();
        }
    return {roundtrip == 10000 && singles == 46 && pairs == 1035 && escapes == kDoubleFlipEscapes,
            fmt("roundtrip %zu/10000, single flips rejected %zu/46, double flips undetected %zu/%zu (frozen %zu)",
                roundtrip, singles, escapes, pairs, kDoubleFlipEscapes)};
}

Verdict modem_roundtrip()
{
    const auto clean = config::load_channel_preset("noiseless", kPresets);
    std::string detail;
    bool ok = true;
    for (double rate : {10.0, 166.0}) {
        ModemConfig c;
        c.bit_rate = rate;
        std::size_t bits = 0, errors = 0;
        for (std::uint64_t block = 0; block < 10; ++block) {
            const auto sent = random_bits(1000, 100 + block);
            const auto rx = channel::propagate(modulate(sent, c), clean);
            const auto got = demodulate(rx, c, 0, sent.size());
            if (got.bits.size() != sent.size())
                return {false, fmt("short demodulation at %g bit/s", rate)};
            for (std::size_t i = 0; i < sent.size(); ++i)
                errors += sent[i] != got.bits[i];
            bits += sent.size();
        }
        ok = ok && errors == 0;
        detail += fmt("%s%g bit/s: %zu errors in %zu bits", detail.empty() ? "" : ", ", rate, errors, bits);
    }
    return {ok, detail};
}

Verdict paper_ber()
{
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 1; s <= 20; ++s)
        seeds.push_back(s);
    const std::vector<channel::ChannelModel> near{config::load_channel_preset("paper-3m", kPresets)};
    const std::vector<channel::ChannelModel> far{config::load_channel_preset("paper-8m", kPresets)};
    const std::vector<double> fast{166.0};
    const std::vector<double> slow{10.0};
    const double near_fast = analysis::ber_sweep(fast, near, 5000, seeds).at(0).mean_ber;
    const double far_slow = analysis::ber_sweep(slow, far, 1000, seeds).at(0).mean_ber;
    const double far_fast = analysis::ber_sweep(fast, far, 2000, seeds).at(0).mean_ber;
    const bool ok = near_fast >= 0.005 && near_fast <= 0.02 && far_slow <= 0.02 && far_fast > 0.05;
    return {ok, fmt("paper-3m @166 = %.3f%%, paper-8m @10 = %.3f%%, paper-8m @166 = %.2f%% (20 seeds)",
                    100.0 * near_fast, 100.0 * far_slow, 100.0 * far_fast)};
}

Verdict capacity_math()
{
    double worst = 0.0;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j)
            for (int k = 0; k < 10; ++k) {
                const double b = 50.0 + 100.0 * i;
                const double s = 0.01 * std::pow(3.0, j);
                const double n = 0.02 * std::pow(2.0, k);
                const double exact = b * std::log2(1.0 + s / n);
                worst = std::max(worst, std::abs(analysis::shannon_capacity(b, s, n) - exact));
            }

    SampleBuffer floor{std::vector<double>(480000), 48000};
    std::mt19937_64 rng(33);
    std::normal_distribution<double> g(0.0, 0.05);
    for (double& v : floor.samples)
        v = g(rng);
    SampleBuffer sweep = floor;
    for (double& v : sweep.samples)
        v *= 2.0; // S/N = 3 once the floor is subtracted
    const auto r = analysis::capacity_profile(sweep, floor, 100.0);
    double off = 0.0;
    for (const auto& b : r.bands)
        off = std::max(off, std::abs(b.capacity - 200.0) / 200.0);
    const std::size_t windows = analysis::window_count(480000, 48000);
    const bool ok = worst <= 1e-9 && off <= 0.05 && windows == 66 && r.windows == 66;
    return {ok, fmt("max |error| %.2g over 1000 points, worst band %.3f%% off 200 bit/s over %zu bands, %zu windows",
                    worst, 100.0 * off, r.bands.size(), windows)};
}

Verdict protocol_invariants()
{
    constexpr int runs = 1000;
    std::size_t exclusivity = 0, tmax = 0, duplex = 0;
    int quick = 0, complete = 0, corrupt_delivery = 0;
    for (int s = 0; s < runs; ++s) {
        const auto c = two_node("paper-3m", static_cast<std::uint64_t>(s), 16);
        const auto t = session::run_session(c);
        exclusivity += session::token_exclusivity_violations(t);
        tmax += session::t_max_violations(t);
        duplex += session::half_duplex_violations(t);
        const bool found = t.nodes[0].discovered_at && t.nodes[1].discovered_at;
        quick += found && std::max(t.nodes[0].discovery_rounds, t.nodes[1].discovery_rounds) <= 10;
        complete += t.summary.complete;
        corrupt_delivery += t.summary.complete && t.delivered != c.payload;
    }
    int single_rerandomization = 0;
    constexpr int collisions = 20;
    for (int s = 0; s < collisions; ++s) {
        auto c = two_node("paper-3m", static_cast<std::uint64_t>(5000 + s), 16);
        c.a.forced_id = 0x5A;
        c.b.forced_id = 0x5A;
        const auto t = session::run_session(c);
        single_rerandomization += t.summary.id_rerandomizations == 1 && t.summary.complete;
    }
    const bool ok = exclusivity == 0 && tmax == 0 && duplex == 0 && quick * 100 >= runs * 99 &&
                    corrupt_delivery == 0 && single_rerandomization == collisions;
    return {ok, fmt("%d sessions: exclusivity %zu, T_max %zu, half-duplex %zu violations; discovery <= 10 rounds "
                    "in %.1f%%; %d complete, %d corrupt deliveries; collision runs with one re-randomization %d/%d",
                    runs, exclusivity, tmax, duplex, 100.0 * quick / runs, complete, corrupt_delivery,
                    single_rerandomization, collisions)};
}

Verdict directivity()
{
    SampleBuffer tone{std::vector<double>(48000), 48000};
    for (std::size_t i = 0; i < tone.size(); ++i)
        tone.samples[i] = 0.9 * std::sin(2.0 * std::numbers::pi * 19000.0 * static_cast<double>(i) / 48000.0);
    std::vector<double> energy;
    for (double angle : {0.0, 30.0, 60.0, 90.0}) {
        channel::ChannelModel m;
        m.angle_deg = angle;
        const auto rx = channel::propagate(tone, m);
        energy.push_back(tone_energy(rx, 19000.0, 0, rx.size()));
    }
    const bool ordered = energy[0] > energy[1] && energy[1] > energy[2] && energy[2] > energy[3];
    const double onset = channel::beaming_start_frequency(340.0, 0.10);
    auto db = [&](std::size_t i) { return 10.0 * std::log10(energy[i] / energy[0]); };
    return {ordered && onset == 3400.0,
            fmt("19 kHz energy 0/30/60/90 deg = 0 / %.2f / %.2f / %.2f dB, beaming onset %.17g Hz", db(1), db(2),
                db(3), onset)};
}

Verdict countermeasures()
{
    // filter response from steady tones
    auto through = [](double freq) {
        SampleBuffer t{std::vector<double>(48000), 48000};
        for (std::size_t i = 0; i < t.size(); ++i)
            t.samples[i] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / 48000.0);
        const auto f = analysis::lowpass_filter(t, 18000.0);
        return 10.0 * std::log10(tone_energy(f, freq, 4000, 40000) / tone_energy(t, freq, 4000, 40000));
    };
    const double stop = through(19000.0);
    const double pass = through(1000.0);

    int baseline_ok = 0, blocked = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto c = two_node("paper-3m", 700 + s, 16);
        baseline_ok += session::run_session(c).summary.complete;
        c.options.receiver_lowpass = 18000.0;
        c.options.budget_s = 120.0;
        const auto t = session::run_session(c);
        blocked += !t.nodes[0].discovered_at && !t.nodes[1].discovered_at;
    }

    int misses = 0;
    for (int i = 0; i < 100; ++i) {
        const double rate = i % 2 ? 166.0 : 10.0;
        ModemConfig mc;
        mc.bit_rate = rate;
        const auto frame = modulate(framing::encode_frame(0xC0DE0000u + static_cast<std::uint32_t>(i)), mc);
        const double lead = 6.0 + 0.01 * (i % 37);
        SampleBuffer buf{std::vector<double>(static_cast<std::size_t>((lead + frame.duration() + 2.0) * 48000), 0.0),
                         48000};
        const auto at = static_cast<std::size_t>(lead * 48000);
        std::copy(frame.samples.begin(), frame.samples.end(), buf.samples.begin() + static_cast<std::ptrdiff_t>(at));
        channel::ChannelModel m;
        m.base_snr_db = 10.0;
        m.noise = {channel::NoiseKind::music_like, 0.0};
        m.seed = 900 + static_cast<std::uint64_t>(i);
        const auto events = analysis::detect_ultrasonic(channel::propagate(buf, m));
        const double end = lead + frame.duration();
        const bool hit = std::any_of(events.begin(), events.end(),
                                     [&](const auto& e) { return e.start < end && e.end > lead; });
        misses += !hit;
    }
    const auto music = channel::synthesize_noise({channel::NoiseKind::music_like, 0.0}, 60.0, 48000, 4242);
    const auto false_alarms = analysis::detect_ultrasonic(music).size();

    const bool ok = stop <= -40.0 && std::abs(pass) <= 1.0 && baseline_ok == 20 && blocked == 20 && misses == 0 &&
                    false_alarms == 0;
    return {ok, fmt("filter %.1f dB at 19 kHz, %.3f dB at 1 kHz; sessions complete without filter %d/20, discovery "
                    "blocked with filter %d/20; detector misses %d/100 frames at 10 dB, %zu false alarms in 60 s music",
                    stop, pass, baseline_ok, blocked, misses, false_alarms)};
}

Verdict noise_immunity()
{
    const auto base = config::load_channel_preset("paper-3m", kPresets);
    const double white_power = channel::awgn_variance(base);
    const double level = 10.0 * std::log10(white_power / channel::kReferencePower);
    std::vector<channel::ChannelModel> models{base, base, base, base};
    models[1].noise = {channel::NoiseKind::music_like, level};
    models[2].noise = {channel::NoiseKind::speech_like, level};
    models[3].noise = {channel::NoiseKind::white, level};
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 1; s <= 20; ++s)
        seeds.push_back(s);
    const std::vector<double> rate{166.0};
    const auto cells = analysis::ber_sweep(rate, models, 5000, seeds);
    const double ref = cells[0].mean_ber;
    const double dm = 100.0 * std::abs(cells[1].mean_ber - ref);
    const double ds = 100.0 * std::abs(cells[2].mean_ber - ref);
    const double dw = 100.0 * std::abs(cells[3].mean_ber - ref);
    return {dm < 1.0 && ds < 1.0,
            fmt("BER %.3f%% alone; +music %.3f%% (%.3f pp), +speech %.3f%% (%.3f pp); same power white %.3f%% "
                "(%.2f pp)",
                100.0 * ref, 100.0 * cells[1].mean_ber, dm, 100.0 * cells[2].mean_ber, ds, 100.0 * cells[3].mean_ber,
                dw)};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Verdict cli_determinism()
{
    const fs::path root = fs::temp_directory_path() / "mosquito_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "payload.bin", std::ios::binary) << "covert payload over near-ultrasound";
    auto p = [&](const std::string& s) { return (root / s).string(); };
    const std::string configs = MOSQUITO_SOURCE_DIR "/configs";

    const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
        {"modulate", {"modulate", p("payload.bin"), "--out", p("modulate")}},
        {"demodulate", {"demodulate", p("modulate/modulated.wav"), "--out", p("demodulate")}},
        {"simulate", {"simulate-session", "--config", configs + "/session-paper-3m.json", "--out", p("simulate")}},
        {"unidirectional", {"simulate-session", "--config", configs + "/unidirectional.json", "--out", p("unidirectional")}},
        {"capacity", {"capacity", "--simulate", "--duration", "3", "--preset", "paper-3m", "--out", p("capacity")}},
        {"ber", {"ber-sweep", "--rates", "10,166", "--presets", "paper-3m,paper-8m", "--bits", "300", "--seeds", "3",
                 "--out", p("ber")}},
        {"detect", {"detect", p("modulate/modulated.wav"), "--out", p("detect")}},
        {"filter", {"filter", p("modulate/modulated.wav"), "--out", p("filter")}},
        {"spectrogram", {"spectrogram", p("modulate/modulated.wav"), "--out", p("spectrogram")}},
    };
    std::size_t identical = 0, files = 0;
    std::string bad;
    std::ostringstream chatter;
    auto* saved = std::cout.rdbuf(chatter.rdbuf());
    for (const auto& [name, argv] : commands) {
        if (cli::run(argv) != 0) {
            bad += " " + name + "(run)";
            continue;
        }
        if (cli::run({"replay", p(name + "/manifest.json"), "--out", p(name + "-replay")}) != 0) {
            bad += " " + name + "(replay)";
            continue;
        }
        bool same = true;
        for (const auto& e : fs::directory_iterator(root / name)) {
            if (e.path().filename() == "manifest.json")
                continue;
            ++files;
            same = same && slurp(e.path()) == slurp(root / (name + "-replay") / e.path().filename());
        }
        identical += same;
        if (!same)
            bad += " " + name;
    }
    std::cout.rdbuf(saved);
    fs::remove_all(root);
    return {identical == commands.size(),
            fmt("%zu/%zu commands replayed bit-identically (%zu output files)%s%s", identical, commands.size(), files,
                bad.empty() ? "" : "; differs:", bad.c_str())};
}

} // namespace

int main()
{
    Report r;
    r.run(1, "frame codec", 5.0, frame_codec);
    r.run(2, "modem roundtrip", 30.0, modem_roundtrip);
    r.run(3, "paper BER presets", 300.0, paper_ber);
    r.run(4, "capacity math", 60.0, capacity_math);
    r.run(5, "protocol invariants", 600.0, protocol_invariants);
    r.run(6, "directivity", 60.0, directivity);
    r.run(7, "countermeasures", 600.0, countermeasures);
    r.run(8, "noise immunity", 300.0, noise_immunity);
    r.run(9, "determinism", 300.0, cli_determinism);
    std::printf("%d of 9 criteria failed\n", r.failed);
    return r.failed == 0 ? 0 : 1;
}
