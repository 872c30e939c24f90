#pragma once

#include "mosquito/modem.hpp"

#include <filesystem>
#include <optional>

namespace mosquito {

// Mono 16-bit PCM only. Samples are clipped to [-1, 1] and rounded to the
// nearest PCM step.
void write_wav(const std::filesystem::path& path, const SampleBuffer& buf);

// Throws IoError for anything other than mono PCM16. When expected_rate is
// given a different file rate is rejected (no resampling).
SampleBuffer read_wav(const std::filesystem::path& path, std::optional<int> expected_rate = std::nullopt);

// Round-trips every sample through the PCM16 grid.
void quantize_pcm16(SampleBuffer& buf);

} // namespace mosquito
