#include <doctest.h>

#include "mosquito/error.hpp"
#include "mosquito/fft.hpp"
#include "mosquito/framing.hpp"
#include "mosquito/modem.hpp"
#include "mosquito/wav.hpp"

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

using namespace mosquito;

namespace {

Bits random_bits(std::size_t n, std::uint32_t seed)
{
    std::mt19937 rng(seed);
    Bits b(n);
    for (auto& x : b)
        x = static_cast<std::uint8_t>(rng() & 1u);
    return b;
}

Bits parse(const char* s)
{
    Bits b;
    for (; *s; ++s)
        b.push_back(static_cast<std::uint8_t>(*s == '1'));
    return b;
}

// Direct projection, |sum x e^{-jwn}|^2 / N^2.
double projection(const std::vector<double>& x, std::size_t begin, std::size_t n, double f, int fs)
{
    std::complex<double> acc{};
    for (std::size_t i = 0; i < n; ++i)
        acc += x[begin + i] * std::polar(1.0, -2.0 * std::numbers::pi * f * static_cast<double>(i) / fs);
    return std::norm(acc) / (static_cast<double>(n) * static_cast<double>(n));
}

SampleBuffer tone(double f, std::size_t n, double amplitude = 1.0, int fs = 48000)
{
    SampleBuffer b;
    b.sample_rate = fs;
    b.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        b.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs);
    return b;
}

// Noise variance giving the requested SNR in a 100 Hz band for a tone of the
// modem's amplitude. White noise spreads sigma^2 evenly over fs/2.
double sigma_for_band_snr(const ModemConfig& cfg, double snr_db)
{
    const double tone_power = cfg.amplitude * cfg.amplitude / 2.0;
    const double band_noise = tone_power / std::pow(10.0, snr_db / 10.0);
    return std::sqrt(band_noise * (cfg.sample_rate / 2.0) / 100.0);
}

std::size_t errors(const Bits& a, const Bits& b)
{
    REQUIRE(a.size() == b.size());
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        n += a[i] != b[i];
    return n;
}

} // namespace

TEST_CASE("config validation")
{
    ModemConfig c;
    CHECK_NOTHROW(validate(c));
    CHECK(c.samples_per_bit() == 289);
    c.bit_rate = 10;
    CHECK(c.samples_per_bit() == 4800);

    ModemConfig bad;
    bad.f0 = 17000;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = {};
    bad.f1 = bad.f0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = {};
    bad.bit_rate = 3001; // under 16 samples per bit
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = {};
    bad.bit_rate = 501; // carriers 1 kHz apart
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = {};
    bad.sample_rate = 32000;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = {};
    bad.amplitude = 1.5;
    CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("slot arithmetic and tone placement")
{
    ModemConfig c;
    c.bit_rate = 10;
    const auto buf = modulate(parse("10"), c);
    REQUIRE(buf.size() == 9600);
    const double a1 = projection(buf.samples, 0, 4800, 19500, 48000);
    const double a0 = projection(buf.samples, 0, 4800, 18500, 48000);
    const double b1 = projection(buf.samples, 4800, 4800, 19500, 48000);
    const double b0 = projection(buf.samples, 4800, 4800, 18500, 48000);
    CHECK(a1 > 100 * a0);
    CHECK(b0 > 100 * b1);

    CHECK(modulate(Bits{}, c).size() == 0);
    for (double rate : {10.0, 50.0, 166.0, 500.0}) {
        c.bit_rate = rate;
        CHECK(modulate(random_bits(37, 1), c).size() == 37 * static_cast<std::size_t>(std::lround(48000 / rate)));
    }
}

TEST_CASE("amplitude and phase continuity")
{
    ModemConfig c;
    const auto buf = modulate(random_bits(400, 2), c);
    double peak = 0.0;
    double max_step = 0.0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
        peak = std::max(peak, std::abs(buf.samples[i]));
        if (i)
            max_step = std::max(max_step, std::abs(buf.samples[i] - buf.samples[i - 1]));
    }
    CHECK(peak == doctest::Approx(0.9).epsilon(0.001));
    // A continuous sinusoid at 19.5 kHz never moves more than A * 2 sin(pi f / fs) per sample.
    CHECK(max_step <= 0.9 * 2.0 * std::sin(std::numbers::pi * 19500.0 / 48000.0) + 1e-9);
}

TEST_CASE("noiseless roundtrip")
{
    for (double rate : {10.0, 166.0}) {
        ModemConfig c;
        c.bit_rate = rate;
        const Bits bits = random_bits(rate == 10.0 ? 1500 : 10000, 7);
        const auto d = demodulate(modulate(bits, c), c, 0);
        CHECK(d.bits == bits);
        CHECK(d.consumed == bits.size() * c.samples_per_bit());
        for (double conf : d.confidences)
            REQUIRE(conf > 0.9);
    }
}

TEST_CASE("trailing partial slot is discarded")
{
    ModemConfig c;
    auto buf = modulate(parse("1011"), c);
    buf.samples.resize(buf.size() - 10);
    const auto d = demodulate(buf, c, 0);
    CHECK(d.bits == parse("101"));
    CHECK(d.consumed == 3 * c.samples_per_bit());
    CHECK(demodulate(buf, c, 0, 2).bits == parse("10"));
}

TEST_CASE("silence gives zero confidence")
{
    ModemConfig c;
    SampleBuffer z;
    z.samples.assign(c.samples_per_bit() * 3, 0.0);
    const auto d = demodulate(z, c, 0);
    REQUIRE(d.confidences.size() == 3);
    for (double conf : d.confidences)
        CHECK(conf == 0.0);
}

TEST_CASE("swapped carriers complement the bits")
{
    ModemConfig c;
    ModemConfig swapped = c;
    std::swap(swapped.f0, swapped.f1);
    const Bits bits = random_bits(500, 9);
    const auto buf = modulate(bits, c);
    const auto d = demodulate(buf, swapped, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        REQUIRE(d.bits[i] == 1 - bits[i]);
}

TEST_CASE("20 dB per-band SNR is error free")
{
    ModemConfig c;
    const double sigma = sigma_for_band_snr(c, 20.0);
    std::size_t total = 0;
    for (std::uint32_t seed = 0; seed < 10; ++seed) {
        const Bits bits = random_bits(1000, 100 + seed);
        auto buf = modulate(bits, c);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, sigma);
        for (double& s : buf.samples)
            s += n(rng);
        total += errors(demodulate(buf, c, 0).bits, bits);
    }
    CHECK(total == 0);
}

TEST_CASE("BER does not increase with SNR")
{
    ModemConfig c;
    const Bits bits = random_bits(16 * 1000, 21); // 1000 trials of 16 bits
    const auto clean = modulate(bits, c);
    double previous = 1.0;
    for (double snr : {0.0, 5.0, 10.0, 15.0, 20.0}) {
        auto buf = clean;
        std::mt19937_64 rng(static_cast<std::uint64_t>(snr) + 1);
        std::normal_distribution<double> n(0.0, sigma_for_band_snr(c, snr));
        for (double& s : buf.samples)
            s += n(rng);
        const double ber = static_cast<double>(errors(demodulate(buf, c, 0).bits, bits)) / bits.size();
        CHECK(ber <= previous);
        previous = ber;
    }
    CHECK(previous == 0.0);
}

TEST_CASE("emitted power stays near the band")
{
    ModemConfig c;
    const auto buf = modulate(random_bits(300, 4), c);
    const auto spec = fft::forward(buf.samples);
    const double hz = 48000.0 / static_cast<double>(buf.size());
    double inside = 0.0;
    double outside = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double f = k * hz;
        (f >= 17000 && f <= 25000 ? inside : outside) += std::norm(spec[k]);
    }
    CHECK(outside < 0.01 * (inside + outside));
}

TEST_CASE("tone_energy")
{
    const auto t = tone(19000, 4800); // 1900 periods
    CHECK(tone_energy(t, 19000, 0, 4800) == doctest::Approx(0.25).epsilon(0.01));
    CHECK(tone_energy(t, 19000, 0, 4800) == doctest::Approx(projection(t.samples, 0, 4800, 19000, 48000)).epsilon(1e-9));

    SampleBuffer z;
    z.samples.assign(1000, 0.0);
    CHECK(tone_energy(z, 19000, 0, 1000) == 0.0);

    const auto low = tone(18500, 4800);
    CHECK(tone_energy(low, 19500, 0, 4800) < 0.01 * tone_energy(low, 18500, 0, 4800));

    CHECK_THROWS_AS(tone_energy(z, 0.0, 0, 10), ArgumentError);
    CHECK_THROWS_AS(tone_energy(z, 24000.0, 0, 10), ArgumentError);
    CHECK_THROWS_AS(tone_energy(z, 19000.0, 995, 10), ArgumentError);
}

TEST_CASE("preamble detection")
{
    ModemConfig c;
    c.bit_rate = 10;
    Bits frame = parse("101010");
    const Bits payload = random_bits(40, 5);
    frame.insert(frame.end(), payload.begin(), payload.end());
    const auto sig = modulate(frame, c);
    SampleBuffer buf;
    buf.samples.assign(12345, 0.0);
    buf.samples.insert(buf.samples.end(), sig.samples.begin(), sig.samples.end());
    const auto lock = detect_preamble(buf, c, 0);
    REQUIRE(lock);
    CHECK(lock->offset >= 12345 - 480);
    CHECK(lock->offset <= 12345 + 480);
    CHECK(lock->score >= kPreambleThreshold);

    SampleBuffer silence;
    silence.samples.assign(48000 * 2, 0.0);
    CHECK_FALSE(detect_preamble(silence, c, 0));
    CHECK_FALSE(detect_preamble(modulate(parse("111111"), c), c, 0));
}

TEST_CASE("preamble locks at 166 bit/s after an arbitrary offset")
{
    ModemConfig c;
    const auto sig = modulate(framing::encode_frame(0xCAFEBABE), c);
    for (std::size_t lead : {0u, 1u, 100u, 777u, 4000u}) {
        SampleBuffer buf;
        buf.samples.assign(lead, 0.0);
        buf.samples.insert(buf.samples.end(), sig.samples.begin(), sig.samples.end());
        buf.samples.insert(buf.samples.end(), c.samples_per_bit(), 0.0);
        const auto lock = detect_preamble(buf, c, 0);
        REQUIRE(lock);
        CHECK(std::abs(static_cast<double>(lock->offset) - static_cast<double>(lead)) <= c.samples_per_bit() / 8.0 + 1);
        const auto d = demodulate(buf, c, lock->offset, framing::kFrameBits);
        const auto f = framing::decode_frame(d.bits);
        CHECK(f.ok());
        CHECK(f.payload == 0xCAFEBABEu);
    }
}

TEST_CASE("WAV roundtrip on the PCM16 grid")
{
    ModemConfig c;
    auto buf = modulate(random_bits(200, 6), c);
    const auto path = std::filesystem::temp_directory_path() / "mosquito_test_modem.wav";
    write_wav(path, buf);
    const auto back = read_wav(path);
    REQUIRE(back.size() == buf.size());
    CHECK(back.sample_rate == 48000);
    double worst = 0.0;
    for (std::size_t i = 0; i < buf.size(); ++i)
        worst = std::max(worst, std::abs(back.samples[i] - buf.samples[i]));
    CHECK(worst <= 0.5 / 32767.0 + 1e-12);
    CHECK(demodulate(back, c, 0).bits == demodulate(buf, c, 0).bits);
    CHECK_THROWS_AS(read_wav(path, 44100), ConfigError);
    CHECK_THROWS_AS(read_wav(path.string() + ".missing"), IoError);
    std::filesystem::remove(path);
}
