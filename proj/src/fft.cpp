#include "mosquito/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace mosquito::fft {

namespace {

// Planning is not thread safe in FFTW; execution on new arrays is.
std::mutex g_plan_mutex;

fftw_plan plan_for(std::size_t n, bool inverse)
{
    static std::map<std::pair<std::size_t, bool>, fftw_plan> cache;
    std::lock_guard lock(g_plan_mutex);
    const auto key = std::make_pair(n, inverse);
    if (auto it = cache.find(key); it != cache.end())
        return it->second;
    std::vector<double> real(n);
    std::vector<std::complex<double>> cplx(n / 2 + 1);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    auto* c = reinterpret_cast<fftw_complex*>(cplx.data());
    fftw_plan plan = inverse ? fftw_plan_dft_c2r_1d(static_cast<int>(n), c, real.data(), flags | FFTW_PRESERVE_INPUT)
                             : fftw_plan_dft_r2c_1d(static_cast<int>(n), real.data(), c, flags);
    cache.emplace(key, plan);
    return plan;
}

} // namespace

std::vector<std::complex<double>> forward(std::span<const double> x)
{
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n / 2 + 1);
    if (n == 0)
        return out;
    std::vector<double> in(x.begin(), x.end());
    fftw_execute_dft_r2c(plan_for(n, false), in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

std::vector<double> inverse(std::span<const std::complex<double>> spectrum, std::size_t n)
{
    std::vector<double> out(n);
    if (n == 0)
        return out;
    std::vector<std::complex<double>> in(spectrum.begin(), spectrum.end());
    in.resize(n / 2 + 1);
    fftw_execute_dft_c2r(plan_for(n, true), reinterpret_cast<fftw_complex*>(in.data()), out.data());
    const double scale = 1.0 / static_cast<double>(n);
    for (double& v : out)
        v *= scale;
    return out;
}

} // namespace mosquito::fft
