#include "mosquito/stream.hpp"

#include "mosquito/error.hpp"

#include <algorithm>

namespace mosquito {

SampleBuffer modulate_messages(std::span<const framing::ControlMessage> msgs, const ModemConfig& cfg,
                               std::size_t gap_slots)
{
    validate(cfg);
    const std::size_t spb = cfg.samples_per_bit();
    SampleBuffer out{{}, cfg.sample_rate};
    out.samples.reserve(msgs.size() * (framing::kFrameBits + gap_slots) * spb);
    for (const auto& m : msgs) {
        const auto bits = framing::encode_frame(framing::encode_message(m));
        const auto audio = modulate(bits, cfg);
        out.samples.insert(out.samples.end(), audio.samples.begin(), audio.samples.end());
        out.samples.resize(out.samples.size() + gap_slots * spb, 0.0);
    }
    return out;
}

std::optional<ReceivedFrame> receive_frame(const SampleBuffer& buf, const ModemConfig& cfg, std::size_t from,
                                           std::size_t max_attempts)
{
    const std::size_t spb = cfg.samples_per_bit();
    const std::size_t frame_len = framing::kFrameBits * spb;
    std::size_t pos = from;
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        const auto lock = detect_preamble(buf, cfg, pos);
        if (!lock || lock->offset + frame_len > buf.size())
            return std::nullopt;
        const auto d = demodulate(buf, cfg, lock->offset, framing::kFrameBits);
        const auto fd = framing::decode_frame(d.bits);
        if (fd.ok())
            if (auto msg = framing::decode_message(fd.payload))
                return ReceivedFrame{*msg, lock->offset, lock->offset + frame_len, cfg.bit_rate};
        pos = lock->offset + std::max<std::size_t>(1, spb / 2);
    }
    return std::nullopt;
}

ScanResult scan_frames(const SampleBuffer& buf, const ModemConfig& cfg)
{
    validate(cfg);
    const std::size_t spb = cfg.samples_per_bit();
    const std::size_t frame_len = framing::kFrameBits * spb;
    ScanResult out;
    std::size_t pos = 0;
    while (true) {
        const auto lock = detect_preamble(buf, cfg, pos);
        if (!lock || lock->offset + frame_len > buf.size())
            break;
        const auto d = demodulate(buf, cfg, lock->offset, framing::kFrameBits);
        const auto fd = framing::decode_frame(d.bits);
        std::optional<framing::ControlMessage> msg;
        if (fd.ok())
            msg = framing::decode_message(fd.payload);
        if (msg) {
            out.frames.push_back({*msg, lock->offset, lock->offset + frame_len, cfg.bit_rate});
            pos = lock->offset + frame_len;
        } else {
            ++out.rejected_locks;
            pos = lock->offset + std::max<std::size_t>(1, spb / 2);
        }
    }
    return out;
}

bool carrier_present(const SampleBuffer& buf, const ModemConfig& cfg, std::size_t begin, std::size_t end)
{
    const std::size_t spb = cfg.samples_per_bit();
    if (end > buf.size() || begin >= end || end - begin < spb)
        throw ArgumentError("carrier window outside buffer");
    auto slot_power = [&](std::size_t at) {
        return tone_energy(buf, cfg.f0, at, spb) + tone_energy(buf, cfg.f1, at, spb);
    };
    std::vector<double> inside;
    for (std::size_t at = begin; at + spb <= end; at += spb)
        inside.push_back(slot_power(at));
    double outside = 0.0;
    std::size_t count = 0;
    for (std::size_t at = 0; at + spb <= begin; at += spb, ++count)
        outside += slot_power(at);
    for (std::size_t at = end; at + spb <= buf.size(); at += spb, ++count)
        outside += slot_power(at);
    if (count == 0)
        return false;
    outside /= static_cast<double>(count);
    std::nth_element(inside.begin(), inside.begin() + static_cast<std::ptrdiff_t>(inside.size() / 2), inside.end());
    return inside[inside.size() / 2] > 3.0 * outside;
}

} // namespace mosquito
