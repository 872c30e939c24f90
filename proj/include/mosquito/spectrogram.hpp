#pragma once

#include "mosquito/modem.hpp"

#include <filesystem>

namespace mosquito::analysis {

struct SpectrogramOptions {
    std::size_t frame = 1024;
    std::size_t hop = 256;
    double f_low = 0.0;
    double f_high = 0.0;       // 0 means Nyquist
    double dynamic_range_db = 80.0;
};

// Time runs left to right, frequency bottom to top. Throws IoError.
void write_spectrogram_png(const SampleBuffer& buf, const std::filesystem::path& path,
                           const SpectrogramOptions& opt = {});

} // namespace mosquito::analysis
