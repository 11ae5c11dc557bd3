#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

namespace fkdv {

using cplx = std::complex<double>;
using Spectrum = std::vector<cplx>;

namespace detail {

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

/// Real-to-complex / complex-to-real plan pair with owned aligned buffers.
class FftPlan {
public:
    FftPlan(int dim, std::size_t n0, std::size_t n1) : dim_(dim), n0_(n0), n1_(n1) {
        const std::size_t last = dim == 1 ? n0 : n1;
        real_count_ = dim == 1 ? n0 : n0 * n1;
        complex_count_ = dim == 1 ? last / 2 + 1 : n0 * (last / 2 + 1);
        real_ = static_cast<double*>(fftw_malloc(sizeof(double) * real_count_));
        spec_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * complex_count_));
        std::lock_guard lock(planner_mutex());
        if (dim == 1) {
            fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n0), real_, spec_, FFTW_ESTIMATE);
            inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n0), spec_, real_, FFTW_ESTIMATE);
        } else {
            fwd_ = fftw_plan_dft_r2c_2d(static_cast<int>(n0), static_cast<int>(n1), real_, spec_, FFTW_ESTIMATE);
            inv_ = fftw_plan_dft_c2r_2d(static_cast<int>(n0), static_cast<int>(n1), spec_, real_, FFTW_ESTIMATE);
        }
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;
    ~FftPlan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
        fftw_free(real_);
        fftw_free(spec_);
    }

    void forward(std::span<const double> in, std::span<cplx> out) {
        std::memcpy(real_, in.data(), sizeof(double) * real_count_);
        fftw_execute(fwd_);
        std::memcpy(static_cast<void*>(out.data()), spec_, sizeof(fftw_complex) * complex_count_);
    }

    /// Unnormalized inverse; c2r destroys its input, so the spectrum is copied first.
    void inverse(std::span<const cplx> in, std::span<double> out) {
        std::memcpy(spec_, static_cast<const void*>(in.data()), sizeof(fftw_complex) * complex_count_);
        fftw_execute(inv_);
        std::memcpy(out.data(), real_, sizeof(double) * real_count_);
    }

    [[nodiscard]] std::size_t real_count() const { return real_count_; }
    [[nodiscard]] std::size_t complex_count() const { return complex_count_; }

private:
    int dim_;
    std::size_t n0_, n1_;
    std::size_t real_count_ = 0, complex_count_ = 0;
    double* real_ = nullptr;
    fftw_complex* spec_ = nullptr;
    fftw_plan fwd_{};
    fftw_plan inv_{};
};

/// Per-thread plan cache keyed by shape.
inline FftPlan& plan_for(int dim, std::size_t n0, std::size_t n1) {
    thread_local std::map<std::tuple<int, std::size_t, std::size_t>, std::unique_ptr<FftPlan>> cache;
    auto key = std::make_tuple(dim, n0, dim == 1 ? std::size_t{1} : n1);
    auto it = cache.find(key);
    if (it == cache.end()) {
        it = cache.emplace(key, std::make_unique<FftPlan>(dim, n0, n1)).first;
    }
    return *it->second;
}

}  // namespace detail

/// Unnormalized forward transform of real samples on an n0 (x n1) grid.
inline Spectrum fft_forward(int dim, std::size_t n0, std::size_t n1, std::span<const double> samples) {
    auto& plan = detail::plan_for(dim, n0, n1);
    Spectrum out(plan.complex_count());
    plan.forward(samples, out);
    return out;
}

/// Normalized inverse transform (includes the 1/N factor).
inline std::vector<double> fft_inverse(int dim, std::size_t n0, std::size_t n1, std::span<const cplx> spec) {
    auto& plan = detail::plan_for(dim, n0, n1);
    std::vector<double> out(plan.real_count());
    plan.inverse(spec, out);
    const double scale = 1.0 / static_cast<double>(plan.real_count());
    for (auto& v : out) v *= scale;
    return out;
}

}  // namespace fkdv
