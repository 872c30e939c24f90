#include "mosquito/modem.hpp"

#include "mosquito/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace mosquito {

namespace {

double slot_energy(const SampleBuffer& buf, double freq, std::size_t begin, std::size_t length)
{
    // Goertzel recurrence evaluated at an arbitrary (non-bin) frequency.
    const double w = 2.0 * std::numbers::pi * freq / buf.sample_rate;
    const double coeff = 2.0 * std::cos(w);
    double s1 = 0.0;
    double s2 = 0.0;
    const double* x = buf.samples.data() + begin;
    for (std::size_t n = 0; n < length; ++n) {
        const double s = x[n] + coeff * s1 - s2;
        s2 = s1;
        s1 = s;
    }
    const double power = s1 * s1 + s2 * s2 - coeff * s1 * s2;
    const double norm = static_cast<double>(length);
    return std::max(power, 0.0) / (norm * norm);
}

struct SlotDecision {
    std::uint8_t bit;
    double confidence;
};

SlotDecision decide(const SampleBuffer& buf, const ModemConfig& cfg, std::size_t begin, std::size_t spb)
{
    const double e0 = slot_energy(buf, cfg.f0, begin, spb);
    const double e1 = slot_energy(buf, cfg.f1, begin, spb);
    const double total = e0 + e1;
    const double confidence = total > 0.0 ? std::abs(e1 - e0) / total : 0.0;
    return {static_cast<std::uint8_t>(e1 > e0 ? 1 : 0), confidence};
}

} // namespace

void validate(const SampleBuffer& buf)
{
    if (buf.sample_rate <= 0)
        throw ConfigError("sample rate must be positive");
    for (double s : buf.samples)
        if (!std::isfinite(s))
            throw ConfigError("sample buffer contains a non-finite value");
}

std::size_t ModemConfig::samples_per_bit() const
{
    return static_cast<std::size_t>(std::lround(sample_rate / bit_rate));
}

void validate(const ModemConfig& cfg)
{
    if (!(cfg.bit_rate > 0.0) || !std::isfinite(cfg.bit_rate))
        throw ConfigError("bit rate must be positive");
    if (cfg.sample_rate <= 0)
        throw ConfigError("sample rate must be positive");
    // Either carrier order is accepted; swapping them inverts every bit.
    const double lo = std::min(cfg.f0, cfg.f1);
    const double hi = std::max(cfg.f0, cfg.f1);
    if (!(cfg.band_low <= lo && lo < hi && hi <= cfg.band_high))
        throw ConfigError("carriers must be distinct and lie inside [band_low, band_high]");
    if (cfg.sample_rate < 2.0 * hi)
        throw ConfigError("sample rate " + std::to_string(cfg.sample_rate) + " Hz is below Nyquist for the carriers");
    if (cfg.sample_rate / cfg.bit_rate < 16.0)
        throw ConfigError("fewer than 16 samples per bit");
    if (hi - lo < 2.0 * cfg.bit_rate)
        throw ConfigError("tone separation must be at least twice the bit rate");
    if (!(cfg.amplitude > 0.0 && cfg.amplitude <= 1.0))
        throw ConfigError("amplitude must lie in (0, 1]");
}

SampleBuffer modulate(std::span<const std::uint8_t> bits, const ModemConfig& cfg)
{
    validate(cfg);
    const std::size_t spb = cfg.samples_per_bit();
    SampleBuffer out;
    out.sample_rate = cfg.sample_rate;
    out.samples.resize(bits.size() * spb);

    const double two_pi = 2.0 * std::numbers::pi;
    const double step0 = two_pi * cfg.f0 / cfg.sample_rate;
    const double step1 = two_pi * cfg.f1 / cfg.sample_rate;
    double phase = 0.0;
    std::size_t n = 0;
    for (std::uint8_t bit : bits) {
        const double step = bit ? step1 : step0;
        for (std::size_t k = 0; k < spb; ++k, ++n) {
            out.samples[n] = cfg.amplitude * std::sin(phase);
            phase += step;
            if (phase >= two_pi)
                phase -= two_pi;
        }
    }
    return out;
}

Demodulated demodulate(const SampleBuffer& buf, const ModemConfig& cfg, std::size_t start_offset,
                       std::optional<std::size_t> max_bits)
{
    validate(cfg);
    if (buf.sample_rate != cfg.sample_rate)
        throw ConfigError("buffer sample rate does not match modem configuration");
    const std::size_t spb = cfg.samples_per_bit();
    Demodulated out;
    if (start_offset >= buf.size())
        return out;
    std::size_t slots = (buf.size() - start_offset) / spb;
    if (max_bits)
        slots = std::min(slots, *max_bits);
    out.bits.reserve(slots);
    out.confidences.reserve(slots);
    for (std::size_t i = 0; i < slots; ++i) {
        const auto d = decide(buf, cfg, start_offset + i * spb, spb);
        out.bits.push_back(d.bit);
        out.confidences.push_back(d.confidence);
    }
    out.consumed = slots * spb;
    return out;
}

double tone_energy(const SampleBuffer& buf, double freq, std::size_t begin, std::size_t length)
{
    if (!(freq > 0.0) || freq >= buf.sample_rate / 2.0)
        throw ArgumentError("probe frequency must lie in (0, sample_rate/2)");
    if (length == 0 || begin > buf.size() || length > buf.size() - begin)
        throw ArgumentError("probe window outside buffer");
    return slot_energy(buf, freq, begin, length);
}

std::optional<PreambleLock> detect_preamble(const SampleBuffer& buf, const ModemConfig& cfg,
                                            std::size_t search_from)
{
    validate(cfg);
    if (buf.sample_rate != cfg.sample_rate)
        throw ConfigError("buffer sample rate does not match modem configuration");
    constexpr std::size_t kSlots = 6;
    const std::size_t spb = cfg.samples_per_bit();
    const std::size_t step = std::max<std::size_t>(1, spb / 8);
    if (buf.size() < search_from || buf.size() - search_from < kSlots * spb)
        return std::nullopt;
    const std::size_t last = buf.size() - kSlots * spb;

    auto score_at = [&](std::size_t offset) -> std::optional<double> {
        double sum = 0.0;
        for (std::size_t k = 0; k < kSlots; ++k) {
            const auto d = decide(buf, cfg, offset + k * spb, spb);
            const std::uint8_t expected = (k % 2 == 0) ? 1 : 0;
            if (d.bit != expected)
                return std::nullopt;
            sum += d.confidence;
        }
        const double mean = sum / kSlots;
        if (mean < kPreambleThreshold)
            return std::nullopt;
        return mean;
    };

    for (std::size_t offset = search_from; offset <= last; offset += step) {
        const auto first = score_at(offset);
        if (!first)
            continue;
        PreambleLock best{offset, *first};
        for (std::size_t cand = offset + step; cand <= std::min(last, offset + spb); cand += step) {
            const auto s = score_at(cand);
            if (s && *s > best.score)
                best = {cand, *s};
        }
        return best;
    }
    return std::nullopt;
}

} // namespace mosquito
