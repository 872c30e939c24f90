#pragma once

// JSON configuration documents. Unknown keys are rejected; omitted keys take
// the defaults of the corresponding struct.

#include "mosquito/channel.hpp"
#include "mosquito/link.hpp"
#include "mosquito/modem.hpp"
#include "mosquito/session.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <variant>

namespace mosquito::config {

using json = nlohmann::json;

json to_json(const ModemConfig& c);
ModemConfig modem_from_json(const json& j);

json to_json(const channel::NoiseProfile& p);
channel::NoiseProfile noise_from_json(const json& j);

json to_json(const channel::ChannelModel& m);
channel::ChannelModel channel_from_json(const json& j);

json to_json(const link::NodeConfig& c);
link::NodeConfig node_from_json(const json& j);

json to_json(const session::SessionOptions& o);
session::SessionOptions options_from_json(const json& j);

// Throws IoError (unreadable) or ConfigError (malformed JSON).
json load_file(const std::filesystem::path& path);

// presets/<name>.json; the "channel" member of the document.
channel::ChannelModel load_channel_preset(const std::string& name, const std::filesystem::path& dir);

// A session document: "mode", "modem", "nodes" (two), "channel" or
// "channel_preset", payload ("payload_file", "payload_text" or "payload_hex"),
// "seed", "options" and, for unidirectional runs, "start_time_s", "guard_s",
// "record_from_s". Relative paths resolve against base_dir.
using SessionDocument = std::variant<session::SessionConfig, session::UnidirectionalConfig>;
SessionDocument session_from_json(const json& j, const std::filesystem::path& base_dir,
                                  const std::filesystem::path& preset_dir);

} // namespace mosquito::config
