#include "mosquito/wav.hpp"

#include "mosquito/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mosquito {

namespace {

std::int16_t to_pcm(double s)
{
    const double clipped = std::clamp(s, -1.0, 1.0);
    return static_cast<std::int16_t>(std::lround(clipped * 32767.0));
}

void put_u32(std::ostream& os, std::uint32_t v)
{
    const std::array<char, 4> b{char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                                char((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

void put_u16(std::ostream& os, std::uint16_t v)
{
    const std::array<char, 2> b{char(v & 0xff), char((v >> 8) & 0xff)};
    os.write(b.data(), 2);
}

std::uint32_t get_u32(const unsigned char* p)
{
    return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

} // namespace

void write_wav(const std::filesystem::path& path, const SampleBuffer& buf)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path.string() + " for writing");
    const auto data_bytes = static_cast<std::uint32_t>(buf.size() * 2);
    os.write("RIFF", 4);
    put_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put_u32(os, 16);
    put_u16(os, 1); // PCM
    put_u16(os, 1); // mono
    put_u32(os, static_cast<std::uint32_t>(buf.sample_rate));
    put_u32(os, static_cast<std::uint32_t>(buf.sample_rate) * 2);
    put_u16(os, 2);
    put_u16(os, 16);
    os.write("data", 4);
    put_u32(os, data_bytes);
    for (double s : buf.samples)
        put_u16(os, static_cast<std::uint16_t>(to_pcm(s)));
    if (!os)
        throw IoError("write failed for " + path.string());
}

SampleBuffer read_wav(const std::filesystem::path& path, std::optional<int> expected_rate)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const auto fail = [&](const std::string& why) { return IoError(path.string() + ": " + why); };
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw fail("not a RIFF/WAVE file");

    std::optional<int> rate;
    SampleBuffer out;
    bool have_data = false;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::uint32_t size = get_u32(chunk + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size())
            throw fail("truncated chunk");
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16)
                throw fail("short fmt chunk");
            const unsigned char* f = bytes.data() + body;
            if (get_u16(f) != 1)
                throw fail("only PCM encoding is supported");
            if (get_u16(f + 2) != 1)
                throw fail("only mono files are supported");
            if (get_u16(f + 14) != 16)
                throw fail("only 16-bit samples are supported");
            rate = static_cast<int>(get_u32(f + 4));
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (!rate)
                throw fail("data chunk before fmt chunk");
            out.samples.resize(size / 2);
            for (std::size_t i = 0; i < out.samples.size(); ++i) {
                const auto v = static_cast<std::int16_t>(get_u16(bytes.data() + body + 2 * i));
                out.samples[i] = v / 32767.0;
            }
            have_data = true;
        }
        pos = body + size + (size & 1);
    }
    if (!rate || !have_data)
        throw fail("missing fmt or data chunk");
    if (expected_rate && *rate != *expected_rate)
        throw ConfigError(path.string() + ": sample rate " + std::to_string(*rate) + " Hz does not match configured " +
                          std::to_string(*expected_rate) + " Hz (resampling is not supported)");
    out.sample_rate = *rate;
    return out;
}

void quantize_pcm16(SampleBuffer& buf)
{
    for (double& s : buf.samples)
        s = to_pcm(s) / 32767.0;
}

} // namespace mosquito
