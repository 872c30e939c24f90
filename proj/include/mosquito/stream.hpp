#pragma once

// Frame-level transmit and receive over sample buffers: a sequence of
// messages becomes frames separated by silent gaps, and a recording is
// scanned for frames by repeated preamble search.

#include "mosquito/framing.hpp"
#include "mosquito/modem.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mosquito {

inline constexpr std::size_t kDefaultGapSlots = 4;

// Each frame is followed by gap_slots silent bit slots.
SampleBuffer modulate_messages(std::span<const framing::ControlMessage> msgs, const ModemConfig& cfg,
                               std::size_t gap_slots = kDefaultGapSlots);

struct ReceivedFrame {
    framing::ControlMessage msg;
    std::size_t offset = 0; // preamble start, samples
    std::size_t end = 0;    // one past the last frame sample
    double bit_rate = 0.0;
};

// Preamble lock + CRC + message decode starting at `from`. A lock that fails
// to decode is retried half a slot later, up to max_attempts locks.
std::optional<ReceivedFrame> receive_frame(const SampleBuffer& buf, const ModemConfig& cfg, std::size_t from = 0,
                                           std::size_t max_attempts = 8);

struct ScanResult {
    std::vector<ReceivedFrame> frames;
    std::size_t rejected_locks = 0; // preamble locks that failed CRC or message decode
};

// Every decodable frame in the buffer, in order.
ScanResult scan_frames(const SampleBuffer& buf, const ModemConfig& cfg);

// Energy at the two carriers inside [begin, end) compared with the rest of
// the buffer; true when the median slot energy inside exceeds three times
// the mean outside.
bool carrier_present(const SampleBuffer& buf, const ModemConfig& cfg, std::size_t begin, std::size_t end);

} // namespace mosquito
