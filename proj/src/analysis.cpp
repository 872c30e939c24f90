#include "mosquito/analysis.hpp"

#include "mosquito/error.hpp"
#include "mosquito/fft.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <numbers>
#include <random>
#include <thread>

namespace mosquito::analysis {

namespace {

constexpr double kAbsoluteFloor = 1e-14;

std::size_t band_index(std::size_t bin, std::size_t nfft, int fs, double resolution, std::size_t nbands)
{
    const double f = static_cast<double>(bin) * fs / static_cast<double>(nfft);
    const auto b = static_cast<std::size_t>(std::floor(f / resolution + 1e-9));
    return std::min(b, nbands - 1);
}

std::size_t band_count(int fs, double resolution)
{
    return static_cast<std::size_t>(std::ceil(fs / 2.0 / resolution - 1e-9));
}

void check_resolution(int fs, double resolution)
{
    if (!(resolution > 0.0) || resolution > fs / 2.0)
        throw ArgumentError("resolution must lie in (0, Nyquist]");
}

// One-sided power per bin of a windowed frame, scaled so the bins sum to the
// mean square of the frame.
void accumulate_frame(std::span<const double> frame, std::span<const double> window, double wnorm,
                      std::vector<double>& per_bin)
{
    std::vector<double> x(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i)
        x[i] = frame[i] * window[i];
    const auto spec = fft::forward(x);
    const std::size_t n = frame.size();
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
        per_bin[k] += (edge ? 1.0 : 2.0) * std::norm(spec[k]) / wnorm;
    }
}

double goertzel(std::span<const double> x, double freq, int fs)
{
    const double w = 2.0 * std::numbers::pi * freq / fs;
    const double coeff = 2.0 * std::cos(w);
    double s1 = 0.0, s2 = 0.0;
    for (double v : x) {
        const double s = v + coeff * s1 - s2;
        s2 = s1;
        s1 = s;
    }
    return std::max(s1 * s1 + s2 * s2 - coeff * s1 * s2, 0.0);
}

double quantile(std::vector<double> v, double q)
{
    if (v.empty())
        return 0.0;
    const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1)));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

} // namespace

double shannon_capacity(double bandwidth, double signal, double noise)
{
    if (!(bandwidth > 0.0))
        throw ArgumentError("bandwidth must be positive");
    if (!(signal >= 0.0))
        throw ArgumentError("signal power must be non-negative");
    if (!(noise > 0.0))
        throw ArgumentError("noise power must be positive");
    return bandwidth * std::log2(1.0 + signal / noise);
}

double CapacityReport::total_capacity_over(double low, double high) const
{
    double sum = 0.0;
    for (const auto& b : bands)
        if (b.low >= low && b.high <= high)
            sum += b.capacity;
    return sum;
}

std::size_t window_count(std::size_t n, int sample_rate, const StftSettings& s)
{
    const auto w = static_cast<std::size_t>(std::llround(s.window_s * sample_rate));
    const auto hop = static_cast<std::size_t>(std::llround(s.hop_s * sample_rate));
    if (w == 0 || hop == 0 || n < w)
        return 0;
    return (n - w) / hop + 1;
}

std::vector<double> band_powers(const SampleBuffer& buf, double resolution, const StftSettings& s)
{
    check_resolution(buf.sample_rate, resolution);
    const auto w = static_cast<std::size_t>(std::llround(s.window_s * buf.sample_rate));
    const auto hop = static_cast<std::size_t>(std::llround(s.hop_s * buf.sample_rate));
    const std::size_t frames = window_count(buf.size(), buf.sample_rate, s);
    if (frames == 0)
        throw ArgumentError("buffer shorter than one analysis window");

    std::vector<double> window(w);
    const double sigma = static_cast<double>(w) / 6.0;
    const double centre = (static_cast<double>(w) - 1.0) / 2.0;
    double wnorm = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        const double z = (static_cast<double>(i) - centre) / sigma;
        window[i] = std::exp(-0.5 * z * z);
        wnorm += window[i] * window[i];
    }
    wnorm *= static_cast<double>(w);

    std::vector<double> per_bin(w / 2 + 1, 0.0);
    for (std::size_t f = 0; f < frames; ++f)
        accumulate_frame(std::span(buf.samples).subspan(f * hop, w), window, wnorm, per_bin);

    const std::size_t nb = band_count(buf.sample_rate, resolution);
    std::vector<double> bands(nb, 0.0);
    for (std::size_t k = 0; k < per_bin.size(); ++k)
        bands[band_index(k, w, buf.sample_rate, resolution, nb)] += per_bin[k] / static_cast<double>(frames);
    return bands;
}

CapacityReport capacity_profile(const SampleBuffer& sweep, const SampleBuffer& noise_floor, double resolution)
{
    if (sweep.sample_rate != noise_floor.sample_rate)
        throw ConfigError("sweep and noise floor sample rates differ");
    if (sweep.duration() < 1.0)
        throw ArgumentError("sweep must be at least 1 s long");
    const auto ps = band_powers(sweep, resolution);
    const auto pn = band_powers(noise_floor, resolution);

    CapacityReport r;
    r.resolution = resolution;
    r.windows = window_count(sweep.size(), sweep.sample_rate);
    const double nyq = sweep.sample_rate / 2.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        Band b;
        b.low = static_cast<double>(i) * resolution;
        b.high = std::min(b.low + resolution, nyq);
        b.noise = pn[i];
        b.signal = std::max(ps[i] - pn[i], 0.0);
        if (b.noise > 0.0) {
            b.capacity = shannon_capacity(resolution, b.signal, b.noise);
            b.snr_db = b.signal > 0.0 ? 10.0 * std::log10(b.signal / b.noise)
                                      : -std::numeric_limits<double>::infinity();
        } else {
            b.capacity = 0.0;
            b.snr_db = b.signal > 0.0 ? std::numeric_limits<double>::infinity()
                                      : -std::numeric_limits<double>::infinity();
        }
        r.bands.push_back(b);
    }
    return r;
}

std::vector<double> psd(const SampleBuffer& buf, double resolution)
{
    if (buf.duration() < 1.0)
        throw ArgumentError("psd needs at least 1 s of audio");
    auto p = band_powers(buf, resolution);
    double total = 0.0;
    for (double v : p)
        total += v;
    if (total <= 0.0) {
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
        return p;
    }
    for (double& v : p)
        v /= total;
    return p;
}

double measure_ber(std::span<const std::uint8_t> sent, std::span<const std::uint8_t> received)
{
    if (sent.size() != received.size())
        throw ArgumentError("bit sequences differ in length (" + std::to_string(sent.size()) + " vs " +
                            std::to_string(received.size()) + ")");
    if (sent.empty())
        return 0.0;
    std::size_t errors = 0;
    for (std::size_t i = 0; i < sent.size(); ++i)
        errors += (sent[i] != 0) != (received[i] != 0);
    return static_cast<double>(errors) / static_cast<double>(sent.size());
}

std::vector<BerCell> ber_sweep(std::span<const double> rates, std::span<const channel::ChannelModel> models,
                               std::size_t payload_bits, std::span<const std::uint64_t> seeds,
                               const ModemConfig& base, unsigned threads)
{
    if (rates.empty() || models.empty() || seeds.empty() || payload_bits == 0)
        throw ArgumentError("ber_sweep needs rates, models, seeds and a positive bit count");
    for (double r : rates) {
        ModemConfig c = base;
        c.bit_rate = r;
        validate(c);
    }
    for (const auto& m : models)
        validate(m);

    const std::size_t cells = rates.size() * models.size();
    const std::size_t tasks = cells * seeds.size();
    std::vector<std::size_t> errors(tasks, 0);

    auto run = [&](std::size_t t) {
        const std::size_t cell = t / seeds.size();
        const std::uint64_t seed = seeds[t % seeds.size()];
        ModemConfig cfg = base;
        cfg.bit_rate = rates[cell / models.size()];
        channel::ChannelModel model = models[cell % models.size()];

        std::mt19937_64 rng(channel::mix_seed(seed, 0x5eed));
        Bits bits(payload_bits);
        for (auto& b : bits)
            b = static_cast<std::uint8_t>(rng() & 1);

        // Long payloads at low rates are pushed through the channel in ~10 s blocks.
        const auto block = std::max<std::size_t>(1, static_cast<std::size_t>(10.0 * cfg.bit_rate));
        std::size_t errs = 0;
        for (std::size_t off = 0, blk = 0; off < bits.size(); off += block, ++blk) {
            const std::size_t len = std::min(block, bits.size() - off);
            const auto chunk = std::span(bits).subspan(off, len);
            const auto tx = modulate(chunk, cfg);
            channel::ChannelModel m = model;
            m.seed = channel::mix_seed(channel::mix_seed(model.seed, seed), blk);
            const auto rx = channel::propagate(tx, m);
            const auto d = demodulate(rx, cfg, 0, len);
            for (std::size_t i = 0; i < len; ++i)
                errs += d.bits[i] != chunk[i];
        }
        errors[t] = errs;
    };

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned n = static_cast<unsigned>(std::min<std::size_t>(threads ? threads : hw, tasks));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < n; ++w)
            pool.emplace_back([&] {
                for (std::size_t t = next++; t < tasks; t = next++) {
                    try {
                        run(t);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure)
                            failure = std::current_exception();
                    }
                }
            });
    }
    if (failure)
        std::rethrow_exception(failure);

    std::vector<BerCell> out;
    for (std::size_t c = 0; c < cells; ++c) {
        std::size_t errs = 0;
        for (std::size_t s = 0; s < seeds.size(); ++s)
            errs += errors[c * seeds.size() + s];
        BerCell cell;
        cell.rate = rates[c / models.size()];
        cell.model = c % models.size();
        cell.bits = payload_bits * seeds.size();
        const double total = static_cast<double>(cell.bits);
        cell.mean_ber = static_cast<double>(errs) / total;
        const double half = 1.96 * std::sqrt(cell.mean_ber * (1.0 - cell.mean_ber) / total);
        cell.ci_low = std::max(0.0, cell.mean_ber - half);
        cell.ci_high = std::min(1.0, cell.mean_ber + half);
        out.push_back(cell);
    }
    return out;
}

std::vector<double> lowpass_taps(double cutoff, int sample_rate)
{
    const double nyq = sample_rate / 2.0;
    if (!(cutoff > 0.0 && cutoff < nyq))
        throw ArgumentError("cutoff must lie in (0, Nyquist)");
    constexpr double atten = 120.0;
    constexpr double transition = 1500.0;
    const double fc = std::max(cutoff - 250.0, cutoff / 2.0);
    const double beta = 0.1102 * (atten - 8.7);
    const double dw = 2.0 * std::numbers::pi * transition / sample_rate;
    auto len = static_cast<std::size_t>(std::ceil((atten - 8.0) / (2.285 * dw))) + 1;
    if (len % 2 == 0)
        ++len;
    const double m = static_cast<double>(len - 1) / 2.0;
    const double wc = 2.0 * fc / sample_rate;
    const double i0b = std::cyl_bessel_i(0.0, beta);

    std::vector<double> h(len);
    double sum = 0.0;
    for (std::size_t n = 0; n < len; ++n) {
        const double t = static_cast<double>(n) - m;
        const double sinc = t == 0.0 ? 1.0 : std::sin(std::numbers::pi * wc * t) / (std::numbers::pi * wc * t);
        const double r = t / m;
        const double kaiser = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
        h[n] = wc * sinc * kaiser;
        sum += h[n];
    }
    for (double& v : h)
        v /= sum;
    return h;
}

SampleBuffer lowpass_filter(const SampleBuffer& buf, double cutoff)
{
    const auto h = lowpass_taps(cutoff, buf.sample_rate);
    const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
    const auto n = static_cast<std::ptrdiff_t>(buf.size());
    SampleBuffer out{std::vector<double>(buf.size(), 0.0), buf.sample_rate};
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + half);
        double acc = 0.0;
        for (std::ptrdiff_t j = lo; j <= hi; ++j)
            acc += h[static_cast<std::size_t>(j - i + half)] * buf.samples[static_cast<std::size_t>(j)];
        out.samples[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

namespace {

bool looks_like_fsk(const SampleBuffer& buf, std::size_t begin, std::size_t end, double fa, double fb)
{
    constexpr std::size_t kSub = 96;
    constexpr std::size_t kSubHop = 24;
    if (end <= begin || end - begin < kSub)
        return false;
    std::vector<double> ea, eb, total;
    for (std::size_t s = begin; s + kSub <= end; s += kSubHop) {
        const auto x = std::span(buf.samples).subspan(s, kSub);
        ea.push_back(goertzel(x, fa, buf.sample_rate));
        eb.push_back(goertzel(x, fb, buf.sample_rate));
        total.push_back(ea.back() + eb.back());
    }
    const double gate = 0.1 * quantile(total, 0.9);

    std::vector<int> raw;
    for (std::size_t i = 0; i < ea.size(); ++i)
        if (total[i] >= gate)
            raw.push_back(ea[i] > eb[i] ? 1 : 0);
    // 5-tap majority vote removes isolated noisy decisions
    std::vector<int> votes(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::size_t lo = i >= 2 ? i - 2 : 0;
        const std::size_t hi = std::min(raw.size(), i + 3);
        int ones = 0;
        for (std::size_t k = lo; k < hi; ++k)
            ones += raw[k];
        votes[i] = 2 * ones > static_cast<int>(hi - lo) ? 1 : (2 * ones == static_cast<int>(hi - lo) ? raw[i] : 0);
    }

    std::vector<double> runs;
    int current = -1;
    double len = 0.0;
    for (const int d : votes) {
        if (d == current) {
            len += 1.0;
        } else {
            if (current >= 0)
                runs.push_back(len);
            current = d;
            len = 1.0;
        }
    }
    if (current >= 0)
        runs.push_back(len);
    if (runs.size() < 4) // fewer than three switches
        return false;

    // The first and last runs are truncated by the event edges.
    std::vector<double> inner(runs.begin() + 1, runs.end() - 1);
    const double u0 = quantile(inner, 0.1);
    if (u0 < 3.0)
        return false;
    double acc = 0.0;
    for (double r : inner)
        acc += r / std::max(1.0, std::round(r / u0));
    const double unit = acc / static_cast<double>(inner.size());
    std::size_t regular = 0;
    for (double r : inner) {
        const double k = std::max(1.0, std::round(r / unit));
        if (std::abs(r - k * unit) <= std::max(0.35 * unit, 1.5))
            ++regular;
    }
    return static_cast<double>(regular) >= 0.8 * static_cast<double>(inner.size());
}

} // namespace

std::vector<DetectionEvent> detect_ultrasonic(const SampleBuffer& buf, const DetectorConfig& cfg)
{
    const int fs = buf.sample_rate;
    const double nyq = fs / 2.0;
    if (!(cfg.scan_low > 0.0 && cfg.scan_low < cfg.scan_high && cfg.scan_high <= nyq))
        throw ArgumentError("scan band must lie within (0, Nyquist]");
    check_resolution(fs, cfg.resolution);

    const auto len = static_cast<std::size_t>(std::llround(cfg.frame_s * fs));
    const auto hop = static_cast<std::size_t>(std::llround(cfg.hop_s * fs));
    if (len == 0 || hop == 0)
        throw ArgumentError("detector frame and hop must be positive");
    if (buf.size() < len)
        return {};
    const std::size_t frames = (buf.size() - len) / hop + 1;

    const auto first_band = static_cast<std::size_t>(std::floor(cfg.scan_low / cfg.resolution + 1e-9));
    const std::size_t nb_all = band_count(fs, cfg.resolution);
    const std::size_t last_band =
        std::min(nb_all, static_cast<std::size_t>(std::ceil(cfg.scan_high / cfg.resolution - 1e-9)));
    if (last_band <= first_band)
        return {};
    const std::size_t nb = last_band - first_band;

    std::vector<double> window(len);
    double wnorm = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len));
        wnorm += window[i] * window[i];
    }
    wnorm *= static_cast<double>(len);

    // power[f * nb + j]
    std::vector<double> power(frames * nb, 0.0);
    std::vector<double> per_bin(len / 2 + 1);
    for (std::size_t f = 0; f < frames; ++f) {
        std::fill(per_bin.begin(), per_bin.end(), 0.0);
        accumulate_frame(std::span(buf.samples).subspan(f * hop, len), window, wnorm, per_bin);
        for (std::size_t k = 0; k < per_bin.size(); ++k) {
            const std::size_t b = band_index(k, len, fs, cfg.resolution, nb_all);
            if (b >= first_band && b < last_band)
                power[f * nb + (b - first_band)] += per_bin[k];
        }
    }

    // Short moving average per band so single-frame spikes do not count.
    const auto span = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.min_duration_s / cfg.hop_s)));
    if (span > 1) {
        std::vector<double> smoothed(power.size(), 0.0);
        for (std::size_t j = 0; j < nb; ++j)
            for (std::size_t f = 0; f < frames; ++f) {
                const std::size_t lo = f >= span / 2 ? f - span / 2 : 0;
                const std::size_t hi = std::min(frames, lo + span);
                double acc = 0.0;
                for (std::size_t g = lo; g < hi; ++g)
                    acc += power[g * nb + j];
                smoothed[f * nb + j] = acc / static_cast<double>(hi - lo);
            }
        power = std::move(smoothed);
    }

    const auto history = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.floor_window_s / cfg.hop_s)));
    const std::size_t warmup = std::min<std::size_t>(history / 10, frames);
    constexpr std::size_t kRefresh = 10;
    std::vector<double> floor(frames * nb, kAbsoluteFloor);
    std::vector<double> scratch;
    for (std::size_t j = 0; j < nb; ++j) {
        double current = kAbsoluteFloor;
        for (std::size_t f = 0; f < frames; ++f) {
            if (f % kRefresh == 0) {
                // Until enough history exists the first window stands in for it.
                const std::size_t lo = f >= warmup ? (f > history ? f - history : 0) : 0;
                const std::size_t hi = f >= warmup ? f : std::min(frames, history);
                scratch.clear();
                for (std::size_t g = lo; g < hi; ++g)
                    scratch.push_back(power[g * nb + j]);
                current = std::max(quantile(scratch, 0.5), kAbsoluteFloor);
            }
            floor[f * nb + j] = current;
        }
    }

    const double ratio = std::pow(10.0, cfg.threshold_db / 10.0);
    std::vector<bool> active(frames * nb, false);
    std::vector<bool> any(frames, false);
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t j = 0; j < nb; ++j)
            if (power[f * nb + j] > floor[f * nb + j] * ratio) {
                active[f * nb + j] = true;
                any[f] = true;
            }

    struct Span {
        std::size_t first, last; // frame indices, inclusive
    };
    std::vector<Span> spans;
    const auto merge_frames = static_cast<std::size_t>(std::llround(cfg.merge_gap_s / cfg.hop_s));
    for (std::size_t f = 0; f < frames; ++f) {
        if (!any[f])
            continue;
        if (!spans.empty() && f - spans.back().last <= merge_frames + 1)
            spans.back().last = f;
        else
            spans.push_back({f, f});
    }

    std::vector<DetectionEvent> events;
    for (const auto& s : spans) {
        DetectionEvent ev;
        ev.start = static_cast<double>(s.first * hop) / fs;
        ev.end = static_cast<double>(s.last * hop + len) / fs;
        if (ev.end - ev.start < cfg.min_duration_s - 1e-9)
            continue;
        std::vector<double> excess(nb, 0.0);
        std::vector<bool> seen(nb, false);
        std::size_t lo_band = nb, hi_band = 0;
        ev.peak_db_over_floor = -std::numeric_limits<double>::infinity();
        for (std::size_t f = s.first; f <= s.last; ++f)
            for (std::size_t j = 0; j < nb; ++j) {
                if (!active[f * nb + j])
                    continue;
                seen[j] = true;
                lo_band = std::min(lo_band, j);
                hi_band = std::max(hi_band, j);
                excess[j] += power[f * nb + j] - floor[f * nb + j];
                ev.peak_db_over_floor =
                    std::max(ev.peak_db_over_floor, 10.0 * std::log10(power[f * nb + j] / floor[f * nb + j]));
            }
        ev.band_low = static_cast<double>(first_band + lo_band) * cfg.resolution;
        ev.band_high = std::min(static_cast<double>(first_band + hi_band + 1) * cfg.resolution, cfg.scan_high);

        const auto a = static_cast<std::size_t>(std::max_element(excess.begin(), excess.end()) - excess.begin());
        std::optional<std::size_t> b;
        for (std::size_t j = 0; j < nb; ++j) {
            const double sep = std::abs(static_cast<double>(j) - static_cast<double>(a)) * cfg.resolution;
            if (seen[j] && sep >= 200.0 && (!b || excess[j] > excess[*b]))
                b = j;
        }
        if (b) {
            auto centre = [&](std::size_t j) { return (static_cast<double>(first_band + j) + 0.5) * cfg.resolution; };
            const std::size_t begin = s.first * hop;
            const std::size_t end = std::min(buf.size(), s.last * hop + len);
            ev.classified_as_fsk = looks_like_fsk(buf, begin, end, centre(a), centre(*b));
        }
        events.push_back(ev);
    }
    return events;
}

} // namespace mosquito::analysis
