#pragma once

// Simulated acoustic medium between two transducers.

#include "mosquito/modem.hpp"

#include <cstdint>
#include <limits>
#include <string_view>
#include <utility>
#include <vector>

namespace mosquito::channel {

enum class NoiseKind { silent, white, music_like, speech_like };

std::string_view to_string(NoiseKind k);
NoiseKind noise_kind_from_string(std::string_view s); // throws ConfigError

struct NoiseProfile {
    NoiseKind kind = NoiseKind::silent;
    double level_db = 0.0; // total noise power relative to kReferencePower
};

// Power of a full-scale 0.9 peak sinusoid; the "signal" that noise levels refer to.
inline constexpr double kReferencePower = 0.9 * 0.9 / 2.0;

// (frequency Hz, gain dB) breakpoints, linearly interpolated, held flat outside.
using ResponseCurve = std::vector<std::pair<double, double>>;

ResponseCurve reversed_speaker_response(); // 0 dB to 18 kHz, -12 dB at 24 kHz
ResponseCurve flat_response();

struct ChannelModel {
    double distance_m = 1.0;
    double angle_deg = 0.0;
    double cone_diameter_m = 0.10;
    double speed_of_sound = 340.0;
    double base_snr_db = std::numeric_limits<double>::infinity(); // per 100 Hz band at 19 kHz, 1 m
    double air_absorption_db_per_m = 0.3;                         // above 18 kHz
    ResponseCurve response = reversed_speaker_response();
    NoiseProfile noise;
    std::uint64_t seed = 0;
    int sample_rate = 48000;
    bool apply_delay = false; // shift samples by the propagation delay
};

// Throws ConfigError on broken invariants.
void validate(const ChannelModel& m);

double beaming_start_frequency(double c, double diameter);
double directivity_gain_db(double angle_deg, double freq, double diameter, double c);
double distance_gain(double distance_m);
double response_gain_db(const ResponseCurve& curve, double freq);

// Total amplitude gain the medium applies at freq (no noise).
double transfer_gain(const ChannelModel& m, double freq);

// Delay a real medium would introduce; reported, not applied unless apply_delay.
double propagation_delay_s(const ChannelModel& m);

// White noise variance that yields base_snr_db per 100 Hz band at 19 kHz,
// distance 1 m, on axis. Zero for an infinite SNR.
double awgn_variance(const ChannelModel& m);

SampleBuffer propagate(const SampleBuffer& tx, const ChannelModel& m);

SampleBuffer synthesize_noise(const NoiseProfile& profile, double duration_s, int sample_rate,
                              std::uint64_t seed);

// Stream seed derivation for independent, reproducible sub-streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace mosquito::channel
