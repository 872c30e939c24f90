#pragma once

// Measurement and countermeasure tools: capacity estimation, PSD, BER
// harness, low-pass filter and an ultrasonic transmission detector.

#include "mosquito/channel.hpp"
#include "mosquito/modem.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mosquito::analysis {

// B * log2(1 + S/N). Throws ArgumentError for B <= 0, S < 0 or N <= 0.
double shannon_capacity(double bandwidth, double signal, double noise);

struct Band {
    double low = 0.0;
    double high = 0.0;
    double signal = 0.0; // S
    double noise = 0.0;  // N
    double snr_db = 0.0; // -inf when S = 0
    double capacity = 0.0;
};

struct CapacityReport {
    std::vector<Band> bands;
    double window_ms = 200.0;
    double overlap = 0.25;
    std::size_t windows = 0;
    double resolution = 100.0;

    // Sum over bands lying entirely inside [low, high].
    double total_capacity_over(double low, double high) const;
};

struct StftSettings {
    double window_s = 0.2;
    double hop_s = 0.15;
};

// Number of analysis windows a buffer of n samples yields.
std::size_t window_count(std::size_t n, int sample_rate, const StftSettings& s = {});

// Mean windowed power per band, 0 Hz to Nyquist. The Nyquist bin joins the last band.
std::vector<double> band_powers(const SampleBuffer& buf, double resolution, const StftSettings& s = {});

// Throws ConfigError on a rate mismatch, ArgumentError on short input or bad resolution.
CapacityReport capacity_profile(const SampleBuffer& sweep, const SampleBuffer& noise_floor,
                                double resolution = 100.0);

// Band powers normalized to sum to 1. Silent input gives a uniform vector.
std::vector<double> psd(const SampleBuffer& buf, double resolution = 100.0);

// Throws ArgumentError on a length mismatch.
double measure_ber(std::span<const std::uint8_t> sent, std::span<const std::uint8_t> received);

struct BerCell {
    double rate = 0.0;
    std::size_t model = 0; // index into the models argument
    double mean_ber = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t bits = 0; // total bits compared
};

// Every (rate, model) cell, rates outermost. threads = 0 picks the hardware count.
std::vector<BerCell> ber_sweep(std::span<const double> rates, std::span<const channel::ChannelModel> models,
                               std::size_t payload_bits, std::span<const std::uint64_t> seeds,
                               const ModemConfig& base = {}, unsigned threads = 0);

// Linear-phase FIR taps for a low-pass at cutoff (odd length).
std::vector<double> lowpass_taps(double cutoff, int sample_rate);

// Zero-delay application of lowpass_taps; output length equals input length.
SampleBuffer lowpass_filter(const SampleBuffer& buf, double cutoff);

struct DetectionEvent {
    double start = 0.0;
    double end = 0.0;
    double band_low = 0.0;
    double band_high = 0.0;
    double peak_db_over_floor = 0.0;
    bool classified_as_fsk = false;
};

struct DetectorConfig {
    double scan_low = 18000.0;
    double scan_high = 24000.0;
    double threshold_db = 10.0;
    double frame_s = 0.02;
    double hop_s = 0.01;
    double resolution = 100.0;
    double floor_window_s = 5.0;
    double min_duration_s = 0.03;
    double merge_gap_s = 0.1;
};

std::vector<DetectionEvent> detect_ultrasonic(const SampleBuffer& buf, const DetectorConfig& cfg = {});

} // namespace mosquito::analysis
