#include "mosquito/config.hpp"

#include "mosquito/error.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>

namespace mosquito::config {

namespace {

void expect_object(const json& j, std::string_view what, std::initializer_list<std::string_view> keys)
{
    if (!j.is_object())
        throw ConfigError(std::string(what) + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (auto key : keys)
            known = known || key == k;
        if (!known)
            throw ConfigError(std::string(what) + ": unknown key '" + k + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, std::string_view what)
{
    if (!j.contains(key))
        return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + "." + key + ": " + e.what());
    }
}

double read_snr(const json& v)
{
    if (v.is_string() && v.get<std::string>() == "inf")
        return std::numeric_limits<double>::infinity();
    if (v.is_number())
        return v.get<double>();
    throw ConfigError("channel.base_snr_db must be a number or \"inf\"");
}

link::Mode mode_from_string(const std::string& s)
{
    if (s == "bidirectional")
        return link::Mode::bidirectional;
    if (s == "unidirectional_tx")
        return link::Mode::unidirectional_tx;
    if (s == "unidirectional_rx")
        return link::Mode::unidirectional_rx;
    throw ConfigError("unknown node mode '" + s + "'");
}

std::string to_string(link::Mode m)
{
    switch (m) {
    case link::Mode::bidirectional: return "bidirectional";
    case link::Mode::unidirectional_tx: return "unidirectional_tx";
    case link::Mode::unidirectional_rx: return "unidirectional_rx";
    }
    return "?";
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw IoError("cannot read payload file " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> parse_hex(const std::string& s)
{
    if (s.size() % 2 != 0)
        throw ConfigError("payload_hex must have an even number of digits");
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < s.size(); i += 2) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(s.substr(i, 2), &used, 16);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != 2)
            throw ConfigError("payload_hex contains a non-hex digit");
        out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

} // namespace

json to_json(const ModemConfig& c)
{
    return {{"f0", c.f0}, {"f1", c.f1}, {"bit_rate", c.bit_rate}, {"sample_rate", c.sample_rate},
            {"band_low", c.band_low}, {"band_high", c.band_high}, {"amplitude", c.amplitude}};
}

ModemConfig modem_from_json(const json& j)
{
    expect_object(j, "modem", {"f0", "f1", "bit_rate", "sample_rate", "band_low", "band_high", "amplitude"});
    ModemConfig c;
    read(j, "f0", c.f0, "modem");
    read(j, "f1", c.f1, "modem");
    read(j, "bit_rate", c.bit_rate, "modem");
    read(j, "sample_rate", c.sample_rate, "modem");
    read(j, "band_low", c.band_low, "modem");
    read(j, "band_high", c.band_high, "modem");
    read(j, "amplitude", c.amplitude, "modem");
    validate(c);
    return c;
}

json to_json(const channel::NoiseProfile& p)
{
    return {{"kind", channel::to_string(p.kind)}, {"level_db", p.level_db}};
}

channel::NoiseProfile noise_from_json(const json& j)
{
    expect_object(j, "noise", {"kind", "level_db"});
    channel::NoiseProfile p;
    std::string kind = std::string(channel::to_string(p.kind));
    read(j, "kind", kind, "noise");
    p.kind = channel::noise_kind_from_string(kind);
    read(j, "level_db", p.level_db, "noise");
    return p;
}

json to_json(const channel::ChannelModel& m)
{
    json curve = json::array();
    for (const auto& [f, g] : m.response)
        curve.push_back({f, g});
    return {{"distance_m", m.distance_m},
            {"angle_deg", m.angle_deg},
            {"cone_diameter_m", m.cone_diameter_m},
            {"speed_of_sound", m.speed_of_sound},
            {"base_snr_db", std::isinf(m.base_snr_db) ? json("inf") : json(m.base_snr_db)},
            {"air_absorption_db_per_m", m.air_absorption_db_per_m},
            {"response", curve},
            {"noise", to_json(m.noise)},
            {"seed", m.seed},
            {"sample_rate", m.sample_rate},
            {"apply_delay", m.apply_delay}};
}

channel::ChannelModel channel_from_json(const json& j)
{
    expect_object(j, "channel",
                  {"distance_m", "angle_deg", "cone_diameter_m", "speed_of_sound", "base_snr_db",
                   "air_absorption_db_per_m", "response", "noise", "seed", "sample_rate", "apply_delay"});
    channel::ChannelModel m;
    read(j, "distance_m", m.distance_m, "channel");
    read(j, "angle_deg", m.angle_deg, "channel");
    read(j, "cone_diameter_m", m.cone_diameter_m, "channel");
    read(j, "speed_of_sound", m.speed_of_sound, "channel");
    if (j.contains("base_snr_db"))
        m.base_snr_db = read_snr(j["base_snr_db"]);
    read(j, "air_absorption_db_per_m", m.air_absorption_db_per_m, "channel");
    if (j.contains("response")) {
        const json& r = j["response"];
        if (r.is_string()) {
            const auto name = r.get<std::string>();
            if (name == "reversed_speaker")
                m.response = channel::reversed_speaker_response();
            else if (name == "flat")
                m.response = channel::flat_response();
            else
                throw ConfigError("unknown response curve '" + name + "'");
        } else {
            m.response.clear();
            read(j, "response", m.response, "channel");
        }
    }
    if (j.contains("noise"))
        m.noise = noise_from_json(j["noise"]);
    read(j, "seed", m.seed, "channel");
    read(j, "sample_rate", m.sample_rate, "channel");
    read(j, "apply_delay", m.apply_delay, "channel");
    channel::validate(m);
    return m;
}

json to_json(const link::NodeConfig& c)
{
    json j = {{"name", c.name},
              {"mode", to_string(c.mode)},
              {"bit_rate", c.bit_rate},
              {"min_bit_rate", c.min_bit_rate},
              {"max_bit_rate", c.max_bit_rate},
              {"t_max_s", c.t_max_s},
              {"retask_latency_s", c.retask_latency_s},
              {"discovery_backoff_max_s", c.discovery_backoff_max_s},
              {"discovery_ack_wait_s", c.discovery_ack_wait_s},
              {"discovery_ack_copies", c.discovery_ack_copies},
              {"gap_slots", c.gap_slots},
              {"turnaround_margin_s", c.turnaround_margin_s},
              {"reversible", c.reversible},
              {"adaptive_bitrate", c.adaptive_bitrate},
              {"seed", c.seed},
              {"sample_rate", c.sample_rate}};
    j["forced_id"] = c.forced_id ? json(*c.forced_id) : json(nullptr);
    return j;
}

link::NodeConfig node_from_json(const json& j)
{
    expect_object(j, "node",
                  {"name", "mode", "bit_rate", "min_bit_rate", "max_bit_rate", "t_max_s", "retask_latency_s",
                   "discovery_backoff_max_s", "discovery_ack_wait_s", "discovery_ack_copies", "gap_slots",
                   "turnaround_margin_s", "reversible", "adaptive_bitrate", "forced_id", "seed", "sample_rate"});
    link::NodeConfig c;
    read(j, "name", c.name, "node");
    std::string mode = to_string(c.mode);
    read(j, "mode", mode, "node");
    c.mode = mode_from_string(mode);
    if (c.mode == link::Mode::unidirectional_tx)
        c.reversible = false;
    read(j, "bit_rate", c.bit_rate, "node");
    read(j, "min_bit_rate", c.min_bit_rate, "node");
    read(j, "max_bit_rate", c.max_bit_rate, "node");
    read(j, "t_max_s", c.t_max_s, "node");
    read(j, "retask_latency_s", c.retask_latency_s, "node");
    read(j, "discovery_backoff_max_s", c.discovery_backoff_max_s, "node");
    read(j, "discovery_ack_wait_s", c.discovery_ack_wait_s, "node");
    read(j, "discovery_ack_copies", c.discovery_ack_copies, "node");
    read(j, "gap_slots", c.gap_slots, "node");
    read(j, "turnaround_margin_s", c.turnaround_margin_s, "node");
    read(j, "reversible", c.reversible, "node");
    read(j, "adaptive_bitrate", c.adaptive_bitrate, "node");
    if (j.contains("forced_id") && !j["forced_id"].is_null()) {
        int id = -1;
        read(j, "forced_id", id, "node");
        if (id < 0 || id > 255)
            throw ConfigError("node.forced_id must lie in [0, 255]");
        c.forced_id = static_cast<std::uint8_t>(id);
    }
    read(j, "seed", c.seed, "node");
    read(j, "sample_rate", c.sample_rate, "node");
    link::validate(c);
    return c;
}

json to_json(const session::SessionOptions& o)
{
    return {{"budget_s", o.budget_s},
            {"receiver_lowpass", o.receiver_lowpass ? json(*o.receiver_lowpass) : json(nullptr)},
            {"quantize_pcm16", o.quantize_pcm16},
            {"record_audio", o.record_audio},
            {"stop_when_delivered", o.stop_when_delivered}};
}

session::SessionOptions options_from_json(const json& j)
{
    expect_object(j, "options", {"budget_s", "receiver_lowpass", "quantize_pcm16", "record_audio", "stop_when_delivered"});
    session::SessionOptions o;
    read(j, "budget_s", o.budget_s, "options");
    if (j.contains("receiver_lowpass") && !j["receiver_lowpass"].is_null()) {
        double cutoff = 0.0;
        read(j, "receiver_lowpass", cutoff, "options");
        o.receiver_lowpass = cutoff;
    }
    read(j, "quantize_pcm16", o.quantize_pcm16, "options");
    read(j, "record_audio", o.record_audio, "options");
    read(j, "stop_when_delivered", o.stop_when_delivered, "options");
    return o;
}

json load_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

channel::ChannelModel load_channel_preset(const std::string& name, const std::filesystem::path& dir)
{
    const auto path = dir / (name + ".json");
    if (!std::filesystem::exists(path))
        throw ConfigError("unknown channel preset '" + name + "' (looked for " + path.string() + ")");
    const json doc = load_file(path);
    if (!doc.is_object() || !doc.contains("channel"))
        throw ConfigError(path.string() + ": preset has no \"channel\" member");
    return channel_from_json(doc["channel"]);
}

SessionDocument session_from_json(const json& j, const std::filesystem::path& base_dir,
                                  const std::filesystem::path& preset_dir)
{
    expect_object(j, "session",
                  {"mode", "modem", "nodes", "channel", "channel_preset", "payload_file", "payload_text",
                   "payload_hex", "seed", "options", "start_time_s", "guard_s", "record_from_s", "description"});
    std::string mode = "bidirectional";
    read(j, "mode", mode, "session");
    if (mode != "bidirectional" && mode != "unidirectional")
        throw ConfigError("session.mode must be \"bidirectional\" or \"unidirectional\"");

    const ModemConfig modem = j.contains("modem") ? modem_from_json(j["modem"]) : ModemConfig{};
    if (!j.contains("nodes") || !j["nodes"].is_array() || j["nodes"].size() != 2)
        throw ConfigError("session.nodes must list exactly two nodes");
    const link::NodeConfig a = node_from_json(j["nodes"][0]);
    const link::NodeConfig b = node_from_json(j["nodes"][1]);

    if (j.contains("channel") && j.contains("channel_preset"))
        throw ConfigError("session: give either channel or channel_preset, not both");
    channel::ChannelModel ch;
    if (j.contains("channel_preset"))
        ch = load_channel_preset(j["channel_preset"].get<std::string>(), preset_dir);
    else if (j.contains("channel"))
        ch = channel_from_json(j["channel"]);

    std::vector<std::uint8_t> payload;
    const int sources = j.contains("payload_file") + j.contains("payload_text") + j.contains("payload_hex");
    if (sources != 1)
        throw ConfigError("session: exactly one of payload_file, payload_text, payload_hex is required");
    if (j.contains("payload_file")) {
        std::filesystem::path p = j["payload_file"].get<std::string>();
        payload = read_bytes(p.is_absolute() ? p : base_dir / p);
    } else if (j.contains("payload_text")) {
        const auto s = j["payload_text"].get<std::string>();
        payload.assign(s.begin(), s.end());
    } else {
        payload = parse_hex(j["payload_hex"].get<std::string>());
    }
    if (payload.empty())
        throw ConfigError("empty payload");

    std::uint64_t seed = 0;
    read(j, "seed", seed, "session");
    const auto options = j.contains("options") ? options_from_json(j["options"]) : session::SessionOptions{};

    if (mode == "bidirectional") {
        session::SessionConfig s;
        s.a = a;
        s.b = b;
        s.modem = modem;
        s.channel = ch;
        s.payload = std::move(payload);
        s.seed = seed;
        s.options = options;
        return s;
    }
    session::UnidirectionalConfig u;
    u.tx = a;
    u.rx = b;
    u.modem = modem;
    u.channel = ch;
    u.payload = std::move(payload);
    u.seed = seed;
    u.options = options;
    read(j, "start_time_s", u.start_time_s, "session");
    read(j, "guard_s", u.guard_s, "session");
    if (j.contains("record_from_s") && !j["record_from_s"].is_null()) {
        double r = 0.0;
        read(j, "record_from_s", r, "session");
        u.record_from_s = r;
    }
    return u;
}

} // namespace mosquito::config
