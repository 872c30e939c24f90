#include "mosquito/framing.hpp"

#include "mosquito/error.hpp"

#include <boost/crc.hpp>

#include <algorithm>

namespace mosquito::framing {

namespace {

constexpr std::array<std::uint8_t, 256> make_crc_table()
{
    std::array<std::uint8_t, 256> table{};
    for (int i = 0; i < 256; ++i) {
        std::uint8_t c = static_cast<std::uint8_t>(i);
        for (int b = 0; b < 8; ++b)
            c = (c & 0x80) ? static_cast<std::uint8_t>((c << 1) ^ kCrcPolynomial) : static_cast<std::uint8_t>(c << 1);
        table[i] = c;
    }
    return table;
}

constexpr auto kCrcTable = make_crc_table();

} // namespace

std::uint8_t crc8(std::uint32_t payload)
{
    std::uint8_t crc = 0;
    for (int shift = 24; shift >= 0; shift -= 8)
        crc = kCrcTable[crc ^ static_cast<std::uint8_t>(payload >> shift)];
    return crc;
}

std::uint8_t crc8(std::span<const std::uint8_t> payload_bits)
{
    if (payload_bits.size() != kPayloadBits)
        throw ArgumentError("crc8 expects exactly 32 payload bits");
    return crc8(static_cast<std::uint32_t>(from_bits(payload_bits)));
}

Bits to_bits(std::uint64_t value, std::size_t width)
{
    Bits out(width);
    for (std::size_t i = 0; i < width; ++i)
        out[i] = static_cast<std::uint8_t>((value >> (width - 1 - i)) & 1u);
    return out;
}

std::uint64_t from_bits(std::span<const std::uint8_t> bits)
{
    std::uint64_t v = 0;
    for (std::uint8_t b : bits)
        v = (v << 1) | (b & 1u);
    return v;
}

Bits encode_frame(std::uint32_t payload)
{
    Bits out(kPreamble.begin(), kPreamble.end());
    const Bits body = to_bits(payload, kPayloadBits);
    const Bits crc = to_bits(crc8(payload), kCrcBits);
    out.insert(out.end(), body.begin(), body.end());
    out.insert(out.end(), crc.begin(), crc.end());
    return out;
}

FrameDecode decode_frame(std::span<const std::uint8_t> bits)
{
    if (bits.size() != kFrameBits)
        throw ArgumentError("decode_frame expects exactly 46 bits");
    if (!std::equal(kPreamble.begin(), kPreamble.end(), bits.begin()))
        return {FrameStatus::bad_preamble, 0};
    const auto payload = static_cast<std::uint32_t>(from_bits(bits.subspan(kPreambleBits, kPayloadBits)));
    const auto crc = static_cast<std::uint8_t>(from_bits(bits.subspan(kPreambleBits + kPayloadBits, kCrcBits)));
    if (crc8(payload) != crc)
        return {FrameStatus::bad_crc, payload};
    return {FrameStatus::ok, payload};
}

std::string_view to_string(MessageKind kind)
{
    switch (kind) {
    case MessageKind::discovery: return "DISCOVERY";
    case MessageKind::acquire: return "ACQUIRE";
    case MessageKind::release: return "RELEASE";
    case MessageKind::ack_ok: return "ACK_OK";
    case MessageKind::retransmit: return "RETRANSMIT";
    case MessageKind::bitrate_inc: return "BITRATE_INC";
    case MessageKind::bitrate_dec: return "BITRATE_DEC";
    case MessageKind::data: return "DATA";
    }
    return "UNKNOWN";
}

std::optional<MessageKind> kind_from_string(std::string_view name)
{
    for (int k = 1; k <= 8; ++k) {
        const auto kind = static_cast<MessageKind>(k);
        if (to_string(kind) == name)
            return kind;
    }
    return std::nullopt;
}

bool is_encodable(const ControlMessage& msg)
{
    const auto k = static_cast<int>(msg.kind);
    if (k < 1 || k > 8)
        return false;
    if (msg.kind == MessageKind::data)
        return msg.sender_id == 0;
    return msg.body <= 0xff;
}

std::uint32_t encode_message(const ControlMessage& msg)
{
    if (!is_encodable(msg))
        throw ArgumentError("message fields do not fit the payload layout for " + std::string(to_string(msg.kind)));
    const std::uint32_t kind = static_cast<std::uint8_t>(msg.kind);
    if (msg.kind == MessageKind::data)
        return (kind << 24) | (std::uint32_t(msg.seq) << 16) | msg.body;
    return (kind << 24) | (std::uint32_t(msg.sender_id) << 16) | (std::uint32_t(msg.seq) << 8) | (msg.body & 0xffu);
}

std::optional<ControlMessage> decode_message(std::uint32_t payload)
{
    const auto kind_octet = static_cast<std::uint8_t>(payload >> 24);
    if (kind_octet < 1 || kind_octet > 8)
        return std::nullopt;
    ControlMessage msg;
    msg.kind = static_cast<MessageKind>(kind_octet);
    if (msg.kind == MessageKind::data) {
        msg.seq = static_cast<std::uint8_t>(payload >> 16);
        msg.body = static_cast<std::uint16_t>(payload & 0xffffu);
    } else {
        msg.sender_id = static_cast<std::uint8_t>(payload >> 16);
        msg.seq = static_cast<std::uint8_t>(payload >> 8);
        msg.body = static_cast<std::uint16_t>(payload & 0xffu);
    }
    return msg;
}

std::size_t chunk_count_for(std::size_t byte_count) { return 2 + (byte_count + 1) / 2; }

std::uint16_t payload_checksum(std::span<const std::uint16_t> chunks)
{
    boost::crc_ccitt_type crc;
    for (std::uint16_t c : chunks) {
        crc.process_byte(static_cast<unsigned char>(c >> 8));
        crc.process_byte(static_cast<unsigned char>(c & 0xff));
    }
    return static_cast<std::uint16_t>(crc.checksum());
}

std::vector<std::uint16_t> pack_chunks(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() > 0xffff)
        throw ArgumentError("payload longer than 65535 bytes");
    std::vector<std::uint16_t> chunks;
    chunks.reserve(chunk_count_for(bytes.size()));
    chunks.push_back(static_cast<std::uint16_t>(bytes.size()));
    for (std::size_t i = 0; i < bytes.size(); i += 2) {
        const std::uint16_t hi = bytes[i];
        const std::uint16_t lo = i + 1 < bytes.size() ? bytes[i + 1] : 0;
        chunks.push_back(static_cast<std::uint16_t>((hi << 8) | lo));
    }
    chunks.push_back(payload_checksum(chunks));
    return chunks;
}

std::optional<std::vector<std::uint8_t>> unpack_chunks(std::span<const std::uint16_t> chunks)
{
    if (chunks.empty())
        return std::nullopt;
    const std::size_t length = chunks[0];
    if (chunks.size() != chunk_count_for(length))
        return std::nullopt;
    const auto body = chunks.first(chunks.size() - 1);
    if (payload_checksum(body) != chunks.back())
        return std::nullopt;
    if (length % 2 == 1 && (body.back() & 0xff) != 0)
        return std::nullopt;
    std::vector<std::uint8_t> out;
    out.reserve(length);
    for (std::size_t i = 1; i < body.size(); ++i) {
        out.push_back(static_cast<std::uint8_t>(body[i] >> 8));
        if (out.size() < length)
            out.push_back(static_cast<std::uint8_t>(body[i] & 0xff));
    }
    return out;
}

} // namespace mosquito::framing
