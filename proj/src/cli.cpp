#include "mosquito/cli.hpp"

#include "mosquito/analysis.hpp"
#include "mosquito/channel.hpp"
#include "mosquito/config.hpp"
#include "mosquito/error.hpp"
#include "mosquito/framing.hpp"
#include "mosquito/session.hpp"
#include "mosquito/spectrogram.hpp"
#include "mosquito/stream.hpp"
#include "mosquito/wav.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#ifndef MOSQUITO_PRESET_DIR
#define MOSQUITO_PRESET_DIR "presets"
#endif
#ifndef MOSQUITO_VERSION
#define MOSQUITO_VERSION "0.0.0"
#endif

namespace mosquito::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Operation ran and failed its postcondition.
struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> rate;
    std::string preset;
    std::string out = ".";
};

// What one invocation read, wrote and ran with. Becomes manifest.json.
struct Record {
    std::string command;
    std::vector<std::string> argv; // canonical, without --out
    json config = json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

std::string iso_now()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

std::string num(double v)
{
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string absolute(const std::string& p)
{
    return fs::absolute(fs::path(p)).lexically_normal().string();
}

std::vector<std::uint8_t> read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out || !(out << text))
        throw IoError("cannot write " + p.string());
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes)
{
    std::ofstream out(p, std::ios::binary);
    if (!out || !out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
        throw IoError("cannot write " + p.string());
}

class Outputs {
public:
    Outputs(const Common& c, Record& r) : dir_(c.out), rec_(r)
    {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec)
            throw IoError("cannot create " + dir_.string() + ": " + ec.message());
    }
    fs::path path(const std::string& name)
    {
        rec_.outputs.push_back(name);
        return dir_ / name;
    }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    Record& rec_;
};

void write_manifest(const fs::path& dir, const Record& rec, const std::string& started, int exit_code)
{
    json m;
    m["tool"] = "mosquito";
    m["version"] = MOSQUITO_VERSION;
    m["command"] = rec.command;
    m["argv"] = rec.argv;
    m["config"] = rec.config;
    m["inputs"] = rec.inputs;
    m["outputs"] = rec.outputs;
    m["started_at"] = started;
    m["finished_at"] = iso_now();
    m["exit_code"] = exit_code;
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

// Presets are looked up by name, or read from a JSON file path.
channel::ChannelModel load_preset(const std::string& name)
{
    const fs::path p(name);
    if (p.extension() == ".json")
        return config::load_channel_preset(p.stem().string(), p.parent_path().empty() ? "." : p.parent_path());
    return config::load_channel_preset(name, MOSQUITO_PRESET_DIR);
}

std::string canonical_preset(const std::string& name)
{
    return fs::path(name).extension() == ".json" ? absolute(name) : name;
}

// Documents for commands other than simulate-session.
json load_tool_config(const Common& c, Record& rec)
{
    if (c.config.empty())
        return json::object();
    json doc = config::load_file(c.config);
    if (!doc.is_object())
        throw ConfigError("config must be a JSON object");
    for (const auto& [k, v] : doc.items())
        if (k != "modem" && k != "channel" && k != "channel_preset" && k != "description")
            throw ConfigError("config: unknown key '" + k + "'");
    if (doc.contains("channel") && doc.contains("channel_preset"))
        throw ConfigError("config: give either channel or channel_preset, not both");
    rec.inputs.push_back(absolute(c.config));
    return doc;
}

ModemConfig modem_for(const Common& c, const json& doc)
{
    ModemConfig m = doc.contains("modem") ? config::modem_from_json(doc["modem"]) : ModemConfig{};
    if (c.rate)
        m.bit_rate = *c.rate;
    validate(m);
    return m;
}

std::optional<channel::ChannelModel> channel_for(const Common& c, const json& doc)
{
    if (!c.preset.empty())
        return load_preset(c.preset);
    if (doc.contains("channel_preset"))
        return load_preset(doc["channel_preset"].get<std::string>());
    if (doc.contains("channel"))
        return config::channel_from_json(doc["channel"]);
    return std::nullopt;
}

void add_common_args(const Common& c, Record& rec)
{
    if (!c.config.empty())
        rec.argv.insert(rec.argv.end(), {"--config", absolute(c.config)});
    if (c.seed)
        rec.argv.insert(rec.argv.end(), {"--seed", std::to_string(*c.seed)});
    if (c.rate)
        rec.argv.insert(rec.argv.end(), {"--rate", num(*c.rate)});
    if (!c.preset.empty())
        rec.argv.insert(rec.argv.end(), {"--preset", canonical_preset(c.preset)});
}

SampleBuffer read_input_wav(const std::string& path, Record& rec, std::optional<int> expected_rate = std::nullopt)
{
    rec.inputs.push_back(absolute(path));
    return read_wav(path, expected_rate);
}

// Scaled down only when it would clip on the PCM16 grid.
SampleBuffer fit_pcm16(SampleBuffer buf)
{
    double peak = 0.0;
    for (double s : buf.samples)
        peak = std::max(peak, std::abs(s));
    if (peak > 1.0)
        for (double& s : buf.samples)
            s /= peak;
    return buf;
}

// modulate -------------------------------------------------------------------

struct ModulateArgs {
    std::string input;
    std::string wav = "modulated.wav";
};

int cmd_modulate(const Common& c, const ModulateArgs& a, Record& rec)
{
    rec.argv.insert(rec.argv.end(), {"modulate", absolute(a.input), "--wav", a.wav});
    add_common_args(c, rec);
    const json doc = load_tool_config(c, rec);
    const ModemConfig modem = modem_for(c, doc);
    const auto model = channel_for(c, doc);
    rec.inputs.push_back(absolute(a.input));
    const auto bytes = read_file(a.input);
    if (bytes.empty())
        throw ArgumentError("empty payload: " + a.input);

    const auto chunks = framing::pack_chunks(bytes);
    std::vector<framing::ControlMessage> msgs;
    msgs.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i)
        msgs.push_back({framing::MessageKind::data, 0, static_cast<std::uint8_t>(i & 0xff), chunks[i]});
    SampleBuffer buf = modulate_messages(msgs, modem);
    if (model) {
        auto m = *model;
        m.seed = channel::mix_seed(m.seed, c.seed.value_or(0));
        buf = fit_pcm16(channel::propagate(buf, m));
        rec.config["channel"] = config::to_json(m);
    }
    rec.config["modem"] = config::to_json(modem);
    rec.config["frames"] = chunks.size();

    Outputs out(c, rec);
    write_wav(out.path(a.wav), buf);
    std::cout << chunks.size() << " frames, " << num(buf.duration()) << " s\n";
    return 0;
}

// demodulate -----------------------------------------------------------------

struct DemodulateArgs {
    std::string input;
    std::string output = "demodulated.bin";
};

int cmd_demodulate(const Common& c, const DemodulateArgs& a, Record& rec)
{
    rec.argv.insert(rec.argv.end(), {"demodulate", absolute(a.input), "--output", a.output});
    add_common_args(c, rec);
    const json doc = load_tool_config(c, rec);
    ModemConfig modem = modem_for(c, doc);
    validate(modem);
    const SampleBuffer buf = read_input_wav(a.input, rec, modem.sample_rate);
    rec.config["modem"] = config::to_json(modem);

    const auto scan = scan_frames(buf, modem);
    Outputs out(c, rec);
    std::ostringstream csv;
    csv << "offset_s,kind,sender,seq,body\n";
    std::map<std::size_t, std::uint16_t> chunks;
    std::optional<std::size_t> last;
    for (const auto& f : scan.frames) {
        csv << num(static_cast<double>(f.offset) / buf.sample_rate) << ',' << framing::to_string(f.msg.kind) << ','
            << int(f.msg.sender_id) << ',' << int(f.msg.seq) << ',' << f.msg.body << '\n';
        if (f.msg.kind != framing::MessageKind::data)
            continue;
        // DATA frames arrive in order; the 8-bit seq wraps.
        std::size_t index = f.msg.seq;
        if (last) {
            index = (*last & ~std::size_t{0xff}) | f.msg.seq;
            if (index <= *last)
                index += 0x100;
        }
        last = index;
        chunks.emplace(index, f.msg.body);
    }
    write_text(out.path("frames.csv"), csv.str());

    if (!chunks.count(0))
        throw Failure("no length frame decoded (" + std::to_string(scan.frames.size()) + " frames)");
    const std::size_t needed = framing::chunk_count_for(chunks.at(0));
    std::vector<std::uint16_t> ordered;
    for (std::size_t i = 0; i < needed; ++i) {
        if (!chunks.count(i))
            throw Failure("payload incomplete: frame " + std::to_string(i) + " of " + std::to_string(needed) +
                          " missing");
        ordered.push_back(chunks.at(i));
    }
    const auto bytes = framing::unpack_chunks(ordered);
    if (!bytes)
        throw Failure("payload checksum mismatch");
    write_bytes(out.path(a.output), *bytes);
    std::cout << bytes->size() << " bytes from " << needed << " frames\n";
    return 0;
}

// simulate-session -------------------------------------------------------------

void write_heard(Outputs& out, const session::SessionTrace& t)
{
    for (std::size_t i = 0; i < 2; ++i) {
        if (t.heard[i].samples.empty())
            continue;
        const std::string name = t.nodes[i].name.empty() ? "node" + std::to_string(i) : t.nodes[i].name;
        write_wav(out.path("heard_" + name + ".wav"), fit_pcm16(t.heard[i]));
    }
}

int cmd_simulate(const Common& c, Record& rec)
{
    if (c.config.empty())
        throw ConfigError("simulate-session needs --config");
    const json doc = config::load_file(c.config);
    rec.inputs.push_back(absolute(c.config));
    const fs::path base = fs::absolute(c.config).parent_path();
    auto parsed = config::session_from_json(doc, base, MOSQUITO_PRESET_DIR);

    auto apply = [&](auto& cfg, link::NodeConfig& x, link::NodeConfig& y) {
        if (c.seed)
            cfg.seed = *c.seed;
        if (c.rate) {
            x.bit_rate = y.bit_rate = *c.rate;
            link::validate(x);
            link::validate(y);
        }
        if (!c.preset.empty())
            cfg.channel = load_preset(c.preset);
        cfg.options.record_audio = true;
        rec.config["seed"] = cfg.seed;
        rec.config["modem"] = config::to_json(cfg.modem);
        rec.config["channel"] = config::to_json(cfg.channel);
        rec.config["options"] = config::to_json(cfg.options);
        rec.config["nodes"] = {config::to_json(x), config::to_json(y)};
        rec.config["payload_bytes"] = cfg.payload.size();
    };

    session::SessionTrace trace;
    if (auto* s = std::get_if<session::SessionConfig>(&parsed)) {
        apply(*s, s->a, s->b);
        rec.config["mode"] = "bidirectional";
        trace = session::run_session(*s);
    } else {
        auto& u = std::get<session::UnidirectionalConfig>(parsed);
        apply(u, u.tx, u.rx);
        rec.config["mode"] = "unidirectional";
        trace = session::unidirectional_schedule(u);
    }
    rec.argv.insert(rec.argv.end(), {"simulate-session", "--config", absolute(c.config), "--seed",
                                     std::to_string(trace.seed)});
    if (c.rate)
        rec.argv.insert(rec.argv.end(), {"--rate", num(*c.rate)});
    if (!c.preset.empty())
        rec.argv.insert(rec.argv.end(), {"--preset", canonical_preset(c.preset)});

    Outputs out(c, rec);
    const json tj = session::to_json(trace);
    write_text(out.path("trace.json"), tj.dump(1) + "\n");
    write_text(out.path("summary.json"), tj["summary"].dump(2) + "\n");
    write_bytes(out.path("delivered.bin"), trace.delivered);
    write_heard(out, trace);

    const auto& s = trace.summary;
    std::cout << "delivered " << s.delivered_bytes << "/" << s.payload_bytes << " bytes in " << num(s.duration_s)
              << " s, " << s.retransmits << " retransmits, goodput " << num(s.goodput_bps) << " bit/s\n";
    if (!s.complete)
        throw Failure("session incomplete; partial trace saved");
    return 0;
}

// capacity ---------------------------------------------------------------------

struct CapacityArgs {
    std::string sweep;
    std::string noise;
    bool simulate = false;
    double resolution = 100.0;
    double duration = 10.0;
};

// Linear chirp across the whole band, for --simulate.
SampleBuffer chirp(double duration, int fs, double f_start, double f_end, double amplitude)
{
    SampleBuffer b;
    b.sample_rate = fs;
    const auto n = static_cast<std::size_t>(std::llround(duration * fs));
    b.samples.resize(n);
    const double k = (f_end - f_start) / duration;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        b.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * (f_start * t + 0.5 * k * t * t));
    }
    return b;
}

int cmd_capacity(const Common& c, const CapacityArgs& a, Record& rec)
{
    rec.argv.push_back("capacity");
    if (a.simulate)
        rec.argv.insert(rec.argv.end(), {"--simulate", "--duration", num(a.duration)});
    else
        rec.argv.insert(rec.argv.end(), {absolute(a.sweep), absolute(a.noise)});
    rec.argv.insert(rec.argv.end(), {"--resolution", num(a.resolution)});
    add_common_args(c, rec);
    const json doc = load_tool_config(c, rec);

    Outputs out(c, rec);
    SampleBuffer sweep, floor;
    if (a.simulate) {
        auto model = channel_for(c, doc).value_or(load_preset("paper-3m"));
        rec.config["channel"] = config::to_json(model);
        const std::uint64_t base = channel::mix_seed(model.seed, c.seed.value_or(0));
        const SampleBuffer tx = chirp(a.duration, model.sample_rate, 20.0, 0.5 * model.sample_rate - 20.0, 0.9);
        model.seed = channel::mix_seed(base, 1);
        sweep = channel::propagate(tx, model);
        SampleBuffer quiet;
        quiet.sample_rate = tx.sample_rate;
        quiet.samples.assign(tx.size(), 0.0);
        model.seed = channel::mix_seed(base, 2);
        floor = channel::propagate(quiet, model);
        write_wav(out.path("sweep.wav"), fit_pcm16(sweep));
        write_wav(out.path("noise.wav"), fit_pcm16(floor));
    } else {
        if (a.sweep.empty() || a.noise.empty())
            throw ConfigError("capacity needs SWEEP and NOISE recordings, or --simulate");
        sweep = read_input_wav(a.sweep, rec);
        floor = read_input_wav(a.noise, rec);
    }
    const auto report = analysis::capacity_profile(sweep, floor, a.resolution);
    rec.config["resolution"] = a.resolution;

    std::ostringstream csv;
    csv << "band_low_hz,band_high_hz,signal,noise,snr_db,capacity_bps\n";
    json bands = json::array();
    for (const auto& b : report.bands) {
        csv << num(b.low) << ',' << num(b.high) << ',' << num(b.signal) << ',' << num(b.noise) << ','
            << num(b.snr_db) << ',' << num(b.capacity) << '\n';
        bands.push_back({{"low", b.low}, {"high", b.high}, {"signal", b.signal}, {"noise", b.noise},
                         {"snr_db", std::isfinite(b.snr_db) ? json(b.snr_db) : json(nullptr)},
                         {"capacity", b.capacity}});
    }
    const double total = report.total_capacity_over(0.0, 0.5 * sweep.sample_rate);
    const double ultra = report.total_capacity_over(18000.0, 24000.0);
    json j = {{"schema_version", 1},  {"resolution", report.resolution}, {"windows", report.windows},
              {"window_ms", report.window_ms}, {"overlap", report.overlap}, {"bands", bands},
              {"total_capacity_bps", total}, {"capacity_18k_24k_bps", ultra}};
    write_text(out.path("capacity.csv"), csv.str());
    write_text(out.path("capacity.json"), j.dump(2) + "\n");
    std::cout << "capacity " << num(total) << " bit/s total, " << num(ultra) << " bit/s in 18-24 kHz\n";
    return 0;
}

// ber-sweep --------------------------------------------------------------------

struct BerArgs {
    std::vector<double> rates{10.0, 166.0};
    std::vector<std::string> presets;
    std::size_t bits = 10000;
    std::size_t seeds = 20;
    unsigned threads = 0;
};

int cmd_ber_sweep(const Common& c, const BerArgs& a, Record& rec)
{
    std::vector<std::string> names = a.presets;
    if (names.empty())
        names.push_back(c.preset.empty() ? "paper-3m" : c.preset);
    rec.argv.insert(rec.argv.end(), {"ber-sweep", "--bits", std::to_string(a.bits), "--seeds",
                                     std::to_string(a.seeds)});
    for (double r : a.rates)
        rec.argv.insert(rec.argv.end(), {"--rates", num(r)});
    for (const auto& p : names)
        rec.argv.insert(rec.argv.end(), {"--presets", canonical_preset(p)});
    Common rest = c;
    rest.preset.clear();
    rest.rate.reset();
    add_common_args(rest, rec);
    const json doc = load_tool_config(c, rec);
    const ModemConfig modem = modem_for(rest, doc);

    std::vector<channel::ChannelModel> models;
    for (const auto& p : names)
        models.push_back(load_preset(p));
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < a.seeds; ++i)
        seeds.push_back(channel::mix_seed(c.seed.value_or(0), i));
    const auto cells = analysis::ber_sweep(a.rates, models, a.bits, seeds, modem, a.threads);
    rec.config["modem"] = config::to_json(modem);
    rec.config["presets"] = names;

    Outputs out(c, rec);
    std::ostringstream csv;
    csv << "rate_bps,preset,mean_ber,ci_low,ci_high,bits\n";
    json rows = json::array();
    for (const auto& cell : cells) {
        csv << num(cell.rate) << ',' << names[cell.model] << ',' << num(cell.mean_ber) << ',' << num(cell.ci_low)
            << ',' << num(cell.ci_high) << ',' << cell.bits << '\n';
        rows.push_back({{"rate_bps", cell.rate}, {"preset", names[cell.model]}, {"mean_ber", cell.mean_ber},
                        {"ci_low", cell.ci_low}, {"ci_high", cell.ci_high}, {"bits", cell.bits}});
        std::cout << names[cell.model] << " @ " << num(cell.rate) << " bit/s: BER " << num(cell.mean_ber) << '\n';
    }
    write_text(out.path("ber.csv"), csv.str());
    write_text(out.path("ber.json"), json{{"schema_version", 1}, {"cells", rows}}.dump(2) + "\n");
    return 0;
}

// detect / filter / spectrogram ------------------------------------------------

struct DetectArgs {
    std::string input;
    double threshold_db = 10.0;
};

int cmd_detect(const Common& c, const DetectArgs& a, Record& rec)
{
    rec.argv.insert(rec.argv.end(), {"detect", absolute(a.input), "--threshold", num(a.threshold_db)});
    const SampleBuffer buf = read_input_wav(a.input, rec);
    analysis::DetectorConfig cfg;
    cfg.threshold_db = a.threshold_db;
    const auto events = analysis::detect_ultrasonic(buf, cfg);
    rec.config["threshold_db"] = cfg.threshold_db;

    Outputs out(c, rec);
    std::ostringstream csv;
    csv << "start_s,end_s,band_low_hz,band_high_hz,peak_db_over_floor,fsk\n";
    json rows = json::array();
    for (const auto& e : events) {
        csv << num(e.start) << ',' << num(e.end) << ',' << num(e.band_low) << ',' << num(e.band_high) << ','
            << num(e.peak_db_over_floor) << ',' << (e.classified_as_fsk ? 1 : 0) << '\n';
        rows.push_back({{"start_s", e.start}, {"end_s", e.end}, {"band_low_hz", e.band_low},
                        {"band_high_hz", e.band_high}, {"peak_db_over_floor", e.peak_db_over_floor},
                        {"fsk", e.classified_as_fsk}});
    }
    write_text(out.path("detections.csv"), csv.str());
    write_text(out.path("detections.json"), json{{"schema_version", 1}, {"events", rows}}.dump(2) + "\n");
    std::cout << events.size() << " events\n";
    return 0;
}

struct FilterArgs {
    std::string input;
    double cutoff = 18000.0;
    std::string wav = "filtered.wav";
};

int cmd_filter(const Common& c, const FilterArgs& a, Record& rec)
{
    rec.argv.insert(rec.argv.end(), {"filter", absolute(a.input), "--cutoff", num(a.cutoff), "--wav", a.wav});
    const SampleBuffer buf = read_input_wav(a.input, rec);
    const SampleBuffer filtered = analysis::lowpass_filter(buf, a.cutoff);
    rec.config["cutoff_hz"] = a.cutoff;
    rec.config["taps"] = analysis::lowpass_taps(a.cutoff, buf.sample_rate).size();
    Outputs out(c, rec);
    write_wav(out.path(a.wav), filtered);
    return 0;
}

struct SpectrogramArgs {
    std::string input;
    double f_low = 0.0;
    double f_high = 0.0;
    std::string png = "spectrogram.png";
};

int cmd_spectrogram(const Common& c, const SpectrogramArgs& a, Record& rec)
{
    rec.argv.insert(rec.argv.end(), {"spectrogram", absolute(a.input), "--f-low", num(a.f_low), "--f-high",
                                     num(a.f_high), "--png", a.png});
    const SampleBuffer buf = read_input_wav(a.input, rec);
    analysis::SpectrogramOptions opt;
    opt.f_low = a.f_low;
    opt.f_high = a.f_high;
    rec.config["frame"] = opt.frame;
    rec.config["hop"] = opt.hop;
    rec.config["dynamic_range_db"] = opt.dynamic_range_db;
    Outputs out(c, rec);
    analysis::write_spectrogram_png(buf, out.path(a.png), opt);
    return 0;
}

int dispatch(const std::vector<std::string>& args, bool allow_replay);

int cmd_replay(const Common& c, const std::string& manifest)
{
    const json m = config::load_file(manifest);
    if (!m.contains("argv") || !m["argv"].is_array() || m["argv"].empty())
        throw ConfigError(manifest + ": no argv recorded");
    auto args = m["argv"].get<std::vector<std::string>>();
    args.insert(args.end(), {"--out", c.out});
    return dispatch(args, false);
}

int dispatch(const std::vector<std::string>& args, bool allow_replay)
{
    CLI::App app{"Ultrasonic speaker-to-speaker modem, link simulator and countermeasures", "mosquito"};
    app.set_version_flag("--version", MOSQUITO_VERSION);
    app.require_subcommand(1);

    Common c;
    auto add_common = [&c](CLI::App* sub) {
        sub->add_option("--config", c.config, "JSON configuration file");
        sub->add_option("--seed", c.seed, "Random seed");
        sub->add_option("--rate", c.rate, "Bit rate, bit/s")->check(CLI::PositiveNumber);
        sub->add_option("--preset", c.preset, "Channel preset name or preset JSON file");
        sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    };

    ModulateArgs mod;
    auto* s_mod = app.add_subcommand("modulate", "File to DATA frames to WAV");
    s_mod->add_option("input", mod.input, "Binary input file")->required();
    s_mod->add_option("--wav", mod.wav, "Output WAV name")->capture_default_str();
    add_common(s_mod);

    DemodulateArgs dem;
    auto* s_dem = app.add_subcommand("demodulate", "WAV to frames to file");
    s_dem->add_option("input", dem.input, "WAV recording")->required();
    s_dem->add_option("--output", dem.output, "Output file name")->capture_default_str();
    add_common(s_dem);

    auto* s_sim = app.add_subcommand("simulate-session", "Two-node session over the simulated channel");
    add_common(s_sim);

    CapacityArgs cap;
    auto* s_cap = app.add_subcommand("capacity", "Per-band Shannon capacity from a sweep and a noise floor");
    s_cap->add_option("sweep", cap.sweep, "Received sweep WAV");
    s_cap->add_option("noise", cap.noise, "Noise floor WAV");
    s_cap->add_flag("--simulate", cap.simulate, "Synthesize both recordings through the channel");
    s_cap->add_option("--duration", cap.duration, "Simulated sweep length, s")->check(CLI::PositiveNumber);
    s_cap->add_option("--resolution", cap.resolution, "Band width, Hz")->check(CLI::PositiveNumber);
    add_common(s_cap);

    BerArgs ber;
    auto* s_ber = app.add_subcommand("ber-sweep", "BER over rates and channel presets");
    s_ber->add_option("--rates", ber.rates, "Bit rates")->delimiter(',')->capture_default_str();
    s_ber->add_option("--presets", ber.presets, "Channel presets")->delimiter(',');
    s_ber->add_option("--bits", ber.bits, "Payload bits per seed")->check(CLI::PositiveNumber);
    s_ber->add_option("--seeds", ber.seeds, "Seeds per cell")->check(CLI::PositiveNumber);
    s_ber->add_option("--threads", ber.threads, "Worker threads, 0 for all cores");
    add_common(s_ber);

    DetectArgs det;
    auto* s_det = app.add_subcommand("detect", "Find ultrasonic transmissions in a recording");
    s_det->add_option("input", det.input, "WAV recording")->required();
    s_det->add_option("--threshold", det.threshold_db, "dB over the noise floor");
    add_common(s_det);

    FilterArgs fil;
    auto* s_fil = app.add_subcommand("filter", "Low-pass a recording");
    s_fil->add_option("input", fil.input, "WAV recording")->required();
    s_fil->add_option("--cutoff", fil.cutoff, "Cutoff, Hz")->check(CLI::PositiveNumber)->capture_default_str();
    s_fil->add_option("--wav", fil.wav, "Output WAV name")->capture_default_str();
    add_common(s_fil);

    SpectrogramArgs spec;
    auto* s_spec = app.add_subcommand("spectrogram", "Render a recording as PNG");
    s_spec->add_option("input", spec.input, "WAV recording")->required();
    s_spec->add_option("--f-low", spec.f_low, "Lowest frequency shown, Hz");
    s_spec->add_option("--f-high", spec.f_high, "Highest frequency shown, Hz (0: Nyquist)");
    s_spec->add_option("--png", spec.png, "Output PNG name")->capture_default_str();
    add_common(s_spec);

    std::string manifest;
    auto* s_rep = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    s_rep->add_option("manifest", manifest, "manifest.json of an earlier run")->required();
    s_rep->add_option("--out", c.out, "Output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (s_rep->parsed()) {
        if (!allow_replay)
            throw ConfigError("a manifest cannot replay another replay");
        return cmd_replay(c, manifest);
    }

    Record rec;
    const std::string started = iso_now();
    int code = 0;
    try {
        if (s_mod->parsed()) {
            rec.command = "modulate";
            code = cmd_modulate(c, mod, rec);
        } else if (s_dem->parsed()) {
            rec.command = "demodulate";
            code = cmd_demodulate(c, dem, rec);
        } else if (s_sim->parsed()) {
            rec.command = "simulate-session";
            code = cmd_simulate(c, rec);
        } else if (s_cap->parsed()) {
            rec.command = "capacity";
            code = cmd_capacity(c, cap, rec);
        } else if (s_ber->parsed()) {
            rec.command = "ber-sweep";
            code = cmd_ber_sweep(c, ber, rec);
        } else if (s_det->parsed()) {
            rec.command = "detect";
            code = cmd_detect(c, det, rec);
        } else if (s_fil->parsed()) {
            rec.command = "filter";
            code = cmd_filter(c, fil, rec);
        } else if (s_spec->parsed()) {
            rec.command = "spectrogram";
            code = cmd_spectrogram(c, spec, rec);
        }
    } catch (const Failure& e) {
        std::cerr << "mosquito " << rec.command << ": " << e.what() << '\n';
        code = 1;
    }
    // Configuration and I/O errors propagate before any manifest is written.
    if (!rec.outputs.empty())
        write_manifest(c.out, rec, started, code);
    return code;
}

} // namespace

int run(const std::vector<std::string>& args)
{
    try {
        return dispatch(args, true);
    } catch (const ConfigError& e) {
        std::cerr << "mosquito: config error: " << e.what() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "mosquito: " << e.what() << '\n';
    }
    return 2;
}

} // namespace mosquito::cli
