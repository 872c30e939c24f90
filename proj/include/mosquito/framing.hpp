#pragma once

// 46-bit link frame: '101010' preamble, 32-bit payload, CRC-8.
// Bits serialize most-significant-bit first.

#include "mosquito/modem.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace mosquito::framing {

inline constexpr std::size_t kPreambleBits = 6;
inline constexpr std::size_t kPayloadBits = 32;
inline constexpr std::size_t kCrcBits = 8;
inline constexpr std::size_t kFrameBits = kPreambleBits + kPayloadBits + kCrcBits;
inline constexpr std::array<std::uint8_t, kPreambleBits> kPreamble{1, 0, 1, 0, 1, 0};
inline constexpr std::uint8_t kCrcPolynomial = 0x07; // x^8 + x^2 + x + 1

std::uint8_t crc8(std::uint32_t payload);
// Bit-level overload; throws ArgumentError unless exactly 32 bits are given.
std::uint8_t crc8(std::span<const std::uint8_t> payload_bits);

Bits to_bits(std::uint64_t value, std::size_t width);
std::uint64_t from_bits(std::span<const std::uint8_t> bits);

Bits encode_frame(std::uint32_t payload);

enum class FrameStatus { ok, bad_preamble, bad_crc };

struct FrameDecode {
    FrameStatus status = FrameStatus::ok;
    std::uint32_t payload = 0;

    bool ok() const { return status == FrameStatus::ok; }
};

// Throws ArgumentError unless exactly 46 bits are given.
FrameDecode decode_frame(std::span<const std::uint8_t> bits);

enum class MessageKind : std::uint8_t {
    discovery = 1,
    acquire = 2,
    release = 3,
    ack_ok = 4,
    retransmit = 5,
    bitrate_inc = 6,
    bitrate_dec = 7,
    data = 8,
};

std::string_view to_string(MessageKind kind);
std::optional<MessageKind> kind_from_string(std::string_view name);

// Control layout: kind | sender_id | seq | body (low 8 bits).
// DATA layout:    kind | seq | body (16 bits); DATA carries no sender id.
struct ControlMessage {
    MessageKind kind = MessageKind::data;
    std::uint8_t sender_id = 0;
    std::uint8_t seq = 0;
    std::uint16_t body = 0;

    friend bool operator==(const ControlMessage&, const ControlMessage&) = default;
};

// True when every field fits the kind's layout.
bool is_encodable(const ControlMessage& msg);

// Throws ArgumentError when !is_encodable(msg).
std::uint32_t encode_message(const ControlMessage& msg);

// std::nullopt for an unknown kind octet.
std::optional<ControlMessage> decode_message(std::uint32_t payload);

// Byte stream <-> 16-bit chunks. Chunk 0 holds the byte length, data chunks
// follow (the last one zero padded) and a CRC-16/CCITT-FALSE over the
// preceding chunks closes the sequence.
std::vector<std::uint16_t> pack_chunks(std::span<const std::uint8_t> bytes);

// std::nullopt when the chunk list disagrees with its length prefix or checksum.
std::optional<std::vector<std::uint8_t>> unpack_chunks(std::span<const std::uint16_t> chunks);

std::size_t chunk_count_for(std::size_t byte_count);

std::uint16_t payload_checksum(std::span<const std::uint16_t> chunks);

} // namespace mosquito::framing
