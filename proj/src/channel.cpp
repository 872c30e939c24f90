#include "mosquito/channel.hpp"

#include "mosquito/error.hpp"
#include "mosquito/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace mosquito::channel {

namespace {

constexpr double kAbsorptionOnset = 18000.0;
constexpr double kAbsorptionRamp = 500.0; // ramps in over [17.5, 18] kHz
constexpr double kDirectivityRefFreq = 19000.0;
constexpr double kDirectivityRefDiameter = 0.10;
constexpr double kDirectivityRefLoss = 20.0; // dB at 90 degrees
constexpr std::size_t kPad = 4096;

bool smooth_size(std::size_t n)
{
    for (std::size_t p : {2, 3, 5})
        while (n % p == 0)
            n /= p;
    return n == 1;
}

std::size_t fft_size_for(std::size_t n)
{
    std::size_t m = n + kPad;
    while (!smooth_size(m))
        ++m;
    return m;
}

double absorption_db(const ChannelModel& m, double freq)
{
    const double excess = std::max(m.distance_m - 1.0, 0.0);
    const double ramp = std::clamp((freq - (kAbsorptionOnset - kAbsorptionRamp)) / kAbsorptionRamp, 0.0, 1.0);
    return -m.air_absorption_db_per_m * excess * ramp;
}

std::vector<double> gaussian(std::size_t n, double sigma, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    std::vector<double> out(n);
    for (double& v : out)
        v = dist(rng);
    return out;
}

double shape_power(NoiseKind kind, double f)
{
    switch (kind) {
    case NoiseKind::music_like: {
        const double pink = 1.0 / std::max(f, 20.0);
        return pink / (1.0 + std::pow(f / 8000.0, 8.0));
    }
    case NoiseKind::speech_like: {
        auto bump = [f](double centre, double width, double weight) {
            const double z = (f - centre) / width;
            return weight * std::exp(-0.5 * z * z);
        };
        // voiced fundamentals (85-255 Hz) plus formant energy
        const double s = bump(170.0, 55.0, 10.0) + bump(500.0, 200.0, 1.5) + bump(1500.0, 500.0, 0.5) +
                         bump(2600.0, 600.0, 0.15);
        return s / (1.0 + std::pow(f / 6000.0, 10.0));
    }
    default:
        return 1.0;
    }
}

void scale_to_power(std::vector<double>& x, double target)
{
    if (x.empty())
        return;
    const double p = std::inner_product(x.begin(), x.end(), x.begin(), 0.0) / static_cast<double>(x.size());
    if (p <= 0.0)
        return;
    const double g = std::sqrt(target / p);
    for (double& v : x)
        v *= g;
}

} // namespace

std::string_view to_string(NoiseKind k)
{
    switch (k) {
    case NoiseKind::silent: return "SILENT";
    case NoiseKind::white: return "WHITE";
    case NoiseKind::music_like: return "MUSIC_LIKE";
    case NoiseKind::speech_like: return "SPEECH_LIKE";
    }
    return "?";
}

NoiseKind noise_kind_from_string(std::string_view s)
{
    for (auto k : {NoiseKind::silent, NoiseKind::white, NoiseKind::music_like, NoiseKind::speech_like})
        if (to_string(k) == s)
            return k;
    throw ConfigError("unknown noise kind '" + std::string(s) + "'");
}

ResponseCurve reversed_speaker_response()
{
    return {{18000.0, 0.0}, {24000.0, -12.0}};
}

ResponseCurve flat_response()
{
    return {};
}

void validate(const ChannelModel& m)
{
    if (!(m.distance_m > 0.0) || !std::isfinite(m.distance_m))
        throw ConfigError("distance must be positive");
    if (!(m.angle_deg >= 0.0 && m.angle_deg <= 90.0))
        throw ConfigError("angle_off_axis must lie in [0, 90] degrees");
    if (!(m.cone_diameter_m > 0.0) || !std::isfinite(m.cone_diameter_m))
        throw ConfigError("cone diameter must be positive");
    if (!(m.speed_of_sound > 0.0) || !std::isfinite(m.speed_of_sound))
        throw ConfigError("speed of sound must be positive");
    if (std::isnan(m.base_snr_db) || m.base_snr_db == -std::numeric_limits<double>::infinity())
        throw ConfigError("base SNR must be a number or +inf");
    if (!(m.air_absorption_db_per_m >= 0.0) || !std::isfinite(m.air_absorption_db_per_m))
        throw ConfigError("air absorption must be non-negative");
    if (!std::isfinite(m.noise.level_db))
        throw ConfigError("noise level must be finite");
    if (m.sample_rate <= 0)
        throw ConfigError("sample rate must be positive");
    for (std::size_t i = 0; i < m.response.size(); ++i) {
        const auto [f, g] = m.response[i];
        if (!std::isfinite(f) || !std::isfinite(g))
            throw ConfigError("response curve entries must be finite");
        if (i > 0 && !(f > m.response[i - 1].first))
            throw ConfigError("response curve frequencies must be strictly increasing");
    }
}

double beaming_start_frequency(double c, double diameter)
{
    if (!(diameter > 0.0))
        throw ArgumentError("cone diameter must be positive");
    if (!(c > 0.0))
        throw ArgumentError("speed of sound must be positive");
    return c / diameter;
}

double directivity_gain_db(double angle_deg, double freq, double diameter, double c)
{
    if (!(angle_deg >= 0.0 && angle_deg <= 90.0))
        throw ArgumentError("angle must lie in [0, 90] degrees");
    if (!(freq > 0.0))
        throw ArgumentError("frequency must be positive");
    const double onset = beaming_start_frequency(c, diameter);
    const double k = kDirectivityRefLoss / (kDirectivityRefFreq * kDirectivityRefDiameter / 340.0 - 1.0);
    const double excess = std::max(freq / onset - 1.0, 0.0);
    const double a = angle_deg / 90.0;
    const double g = -k * excess * a * a;
    return g == 0.0 ? 0.0 : g; // no -0
}

double distance_gain(double distance_m)
{
    if (!(distance_m > 0.0))
        throw ArgumentError("distance must be positive");
    return 1.0 / distance_m;
}

double response_gain_db(const ResponseCurve& curve, double freq)
{
    if (curve.empty())
        return 0.0;
    if (freq <= curve.front().first)
        return curve.front().second;
    if (freq >= curve.back().first)
        return curve.back().second;
    auto hi = std::upper_bound(curve.begin(), curve.end(), freq,
                               [](double f, const auto& p) { return f < p.first; });
    auto lo = std::prev(hi);
    const double t = (freq - lo->first) / (hi->first - lo->first);
    return lo->second + t * (hi->second - lo->second);
}

double transfer_gain(const ChannelModel& m, double freq)
{
    double db = response_gain_db(m.response, freq) + absorption_db(m, freq);
    if (freq > 0.0)
        db += directivity_gain_db(m.angle_deg, freq, m.cone_diameter_m, m.speed_of_sound);
    return std::pow(10.0, db / 20.0) * distance_gain(m.distance_m);
}

double propagation_delay_s(const ChannelModel& m)
{
    return m.distance_m / m.speed_of_sound;
}

double awgn_variance(const ChannelModel& m)
{
    if (std::isinf(m.base_snr_db))
        return 0.0;
    ChannelModel ref = m;
    ref.distance_m = 1.0;
    ref.angle_deg = 0.0;
    const double g = transfer_gain(ref, kDirectivityRefFreq);
    const double p_rx = kReferencePower * g * g;
    const double per_band = p_rx / std::pow(10.0, m.base_snr_db / 10.0);
    return per_band * (m.sample_rate / 2.0) / 100.0;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

SampleBuffer synthesize_noise(const NoiseProfile& profile, double duration_s, int sample_rate,
                              std::uint64_t seed)
{
    if (!(duration_s > 0.0))
        throw ArgumentError("duration must be positive");
    if (sample_rate <= 0)
        throw ArgumentError("sample rate must be positive");
    const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
    SampleBuffer out{std::vector<double>(n, 0.0), sample_rate};
    if (profile.kind == NoiseKind::silent || n == 0)
        return out;

    const double target = kReferencePower * std::pow(10.0, profile.level_db / 10.0);
    if (profile.kind == NoiseKind::white) {
        out.samples = gaussian(n, 1.0, seed);
    } else {
        const std::size_t nfft = fft_size_for(n);
        auto spec = fft::forward(gaussian(nfft, 1.0, seed));
        for (std::size_t k = 0; k < spec.size(); ++k) {
            const double f = static_cast<double>(k) * sample_rate / static_cast<double>(nfft);
            spec[k] *= k == 0 ? 0.0 : std::sqrt(shape_power(profile.kind, f));
        }
        auto shaped = fft::inverse(spec, nfft);
        shaped.resize(n);
        out.samples = std::move(shaped);
    }
    scale_to_power(out.samples, target);
    return out;
}

SampleBuffer propagate(const SampleBuffer& tx, const ChannelModel& m)
{
    validate(m);
    if (tx.sample_rate != m.sample_rate)
        throw ConfigError("sample rate " + std::to_string(tx.sample_rate) + " does not match channel rate " +
                          std::to_string(m.sample_rate));
    const std::size_t n = tx.size();
    SampleBuffer rx{std::vector<double>(n, 0.0), tx.sample_rate};
    if (n == 0)
        return rx;

    const std::size_t nfft = fft_size_for(n);
    const std::size_t bins = nfft / 2 + 1;
    std::vector<double> gain(bins);
    for (std::size_t k = 0; k < bins; ++k)
        gain[k] = transfer_gain(m, static_cast<double>(k) * m.sample_rate / static_cast<double>(nfft));
    const auto [gmin, gmax] = std::minmax_element(gain.begin(), gain.end());

    if (*gmin == *gmax) {
        for (std::size_t i = 0; i < n; ++i)
            rx.samples[i] = tx.samples[i] * *gmin;
    } else {
        std::vector<double> padded(nfft, 0.0);
        std::copy(tx.samples.begin(), tx.samples.end(), padded.begin());
        auto spec = fft::forward(padded);
        for (std::size_t k = 0; k < bins; ++k)
            spec[k] *= gain[k];
        auto y = fft::inverse(spec, nfft);
        std::copy_n(y.begin(), n, rx.samples.begin());
    }

    if (m.apply_delay) {
        const auto shift = static_cast<std::size_t>(std::llround(propagation_delay_s(m) * m.sample_rate));
        if (shift >= n) {
            std::fill(rx.samples.begin(), rx.samples.end(), 0.0);
        } else if (shift > 0) {
            std::move_backward(rx.samples.begin(), rx.samples.end() - static_cast<std::ptrdiff_t>(shift),
                               rx.samples.end());
            std::fill_n(rx.samples.begin(), shift, 0.0);
        }
    }

    if (m.noise.kind != NoiseKind::silent) {
        const auto noise = synthesize_noise(m.noise, rx.duration(), m.sample_rate, mix_seed(m.seed, 1));
        for (std::size_t i = 0; i < n && i < noise.size(); ++i)
            rx.samples[i] += noise.samples[i];
    }
    if (const double var = awgn_variance(m); var > 0.0) {
        const auto w = gaussian(n, std::sqrt(var), mix_seed(m.seed, 2));
        for (std::size_t i = 0; i < n; ++i)
            rx.samples[i] += w[i];
    }
    return rx;
}

} // namespace mosquito::channel
