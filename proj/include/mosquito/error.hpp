#pragma once

#include <stdexcept>
#include <string>

namespace mosquito {

// Invalid parameter set (modem, channel, node or session configuration).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A single argument outside the operation's domain.
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Link-layer state machine misuse, e.g. events delivered out of order.
struct ProtocolError : std::logic_error {
    using std::logic_error::logic_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mosquito
