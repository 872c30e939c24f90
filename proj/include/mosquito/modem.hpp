#pragma once

// Binary FSK physical layer for the 18-24 kHz band.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace mosquito {

using Bits = std::vector<std::uint8_t>; // one element per bit, values 0/1

// Mono audio at a fixed sample rate. Samples are nominally within [-1, 1].
struct SampleBuffer {
    std::vector<double> samples;
    int sample_rate = 48000;

    std::size_t size() const { return samples.size(); }
    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// Throws ConfigError on a non-positive rate or any non-finite sample.
void validate(const SampleBuffer& buf);

struct ModemConfig {
    double f0 = 18500.0; // '0' carrier, Hz
    double f1 = 19500.0; // '1' carrier, Hz
    double bit_rate = 166.0;
    int sample_rate = 48000;
    double band_low = 18000.0;
    double band_high = 24000.0;
    double amplitude = 0.9; // peak

    // round(sample_rate / bit_rate)
    std::size_t samples_per_bit() const;
    double slot_seconds() const { return static_cast<double>(samples_per_bit()) / sample_rate; }
};

// Throws ConfigError when a ModemConfig invariant is broken.
void validate(const ModemConfig& cfg);

// Continuous-phase FSK. Output has bits.size() * samples_per_bit() samples.
SampleBuffer modulate(std::span<const std::uint8_t> bits, const ModemConfig& cfg);

struct Demodulated {
    Bits bits;
    std::vector<double> confidences;
    std::size_t consumed = 0; // samples covered by the decoded slots
};

// Hard decision per complete slot starting at start_offset; a trailing
// partial slot is dropped.
Demodulated demodulate(const SampleBuffer& buf, const ModemConfig& cfg, std::size_t start_offset = 0,
                       std::optional<std::size_t> max_bits = std::nullopt);

// |sum x[n] e^{-j w n}|^2 / N^2 over samples [begin, begin + length).
// A unit-amplitude on-frequency sinusoid yields 0.25.
double tone_energy(const SampleBuffer& buf, double freq, std::size_t begin, std::size_t length);

struct PreambleLock {
    std::size_t offset = 0;
    double score = 0.0; // mean confidence over the six preamble slots
};

inline constexpr double kPreambleThreshold = 0.5;

// First '101010' lock at or after search_from (1/8-slot search grid, refined
// to the best-scoring candidate within one slot of the first hit).
std::optional<PreambleLock> detect_preamble(const SampleBuffer& buf, const ModemConfig& cfg,
                                            std::size_t search_from = 0);

} // namespace mosquito
