#include "mosquito/spectrogram.hpp"

#include "mosquito/error.hpp"
#include "mosquito/fft.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>

namespace mosquito::analysis {

namespace {

void write_gray_png(const std::filesystem::path& path, std::size_t width, std::size_t height, const png_byte* pixels)
{
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp)
        throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < height; ++y)
        png_write_row(png, pixels + width * y);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace

void write_spectrogram_png(const SampleBuffer& buf, const std::filesystem::path& path,
                           const SpectrogramOptions& opt)
{
    if (opt.frame < 2 || opt.hop == 0)
        throw ArgumentError("spectrogram frame and hop must be positive");
    if (buf.size() < opt.frame)
        throw ArgumentError("buffer shorter than one spectrogram frame");
    const double nyq = buf.sample_rate / 2.0;
    const double f_high = opt.f_high > 0.0 ? std::min(opt.f_high, nyq) : nyq;
    if (!(opt.f_low >= 0.0 && opt.f_low < f_high))
        throw ArgumentError("spectrogram frequency range is empty");

    const std::size_t frames = (buf.size() - opt.frame) / opt.hop + 1;
    const double bin_hz = buf.sample_rate / static_cast<double>(opt.frame);
    const auto k_lo = static_cast<std::size_t>(std::ceil(opt.f_low / bin_hz));
    const auto k_hi = std::min(opt.frame / 2, static_cast<std::size_t>(std::floor(f_high / bin_hz)));
    const std::size_t rows = k_hi - k_lo + 1;

    std::vector<double> window(opt.frame);
    for (std::size_t i = 0; i < opt.frame; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(opt.frame));

    std::vector<double> db(frames * rows);
    std::vector<double> x(opt.frame);
    double peak = -1e300;
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t i = 0; i < opt.frame; ++i)
            x[i] = buf.samples[f * opt.hop + i] * window[i];
        const auto spec = fft::forward(x);
        for (std::size_t r = 0; r < rows; ++r) {
            const double v = 10.0 * std::log10(std::norm(spec[k_lo + r]) + 1e-20);
            db[f * rows + r] = v;
            peak = std::max(peak, v);
        }
    }

    // Brighter is louder; the bottom of the dynamic range is black.
    std::vector<png_byte> image(frames * rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t y = rows - 1 - r;
        for (std::size_t f = 0; f < frames; ++f) {
            const double t = std::clamp(1.0 - (peak - db[f * rows + r]) / opt.dynamic_range_db, 0.0, 1.0);
            image[y * frames + f] = static_cast<png_byte>(std::lround(255.0 * t));
        }
    }
    write_gray_png(path, frames, rows, image.data());
}

} // namespace mosquito::analysis
