#include "fft.h"

#include <fftw3.h>

#include <cstring>
#include <mutex>

namespace downbeat::detail {

namespace {
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

RealFft::RealFft(std::size_t n) : n_(n) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    in_buf_ = fftw_alloc_real(n);
    out_buf_ = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_buf_,
                                 static_cast<fftw_complex*>(out_buf_), FFTW_ESTIMATE);
}

RealFft::~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_));
    fftw_free(in_buf_);
    fftw_free(out_buf_);
}

void RealFft::forward(const double* in, std::complex<double>* out) {
    std::memcpy(in_buf_, in, n_ * sizeof(double));
    fftw_execute(static_cast<fftw_plan>(plan_));
    std::memcpy(out, out_buf_, (n_ / 2 + 1) * sizeof(std::complex<double>));
}

ComplexFft::ComplexFft(std::size_t n) : n_(n) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    buf_a_ = fftw_alloc_complex(n);
    buf_b_ = fftw_alloc_complex(n);
    fwd_plan_ = fftw_plan_dft_1d(static_cast<int>(n), static_cast<fftw_complex*>(buf_a_),
                                 static_cast<fftw_complex*>(buf_b_), FFTW_FORWARD, FFTW_ESTIMATE);
    inv_plan_ = fftw_plan_dft_1d(static_cast<int>(n), static_cast<fftw_complex*>(buf_a_),
                                 static_cast<fftw_complex*>(buf_b_), FFTW_BACKWARD, FFTW_ESTIMATE);
}

ComplexFft::~ComplexFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(fwd_plan_));
    fftw_destroy_plan(static_cast<fftw_plan>(inv_plan_));
    fftw_free(buf_a_);
    fftw_free(buf_b_);
}

void ComplexFft::forward(const std::complex<double>* in, std::complex<double>* out) {
    std::memcpy(buf_a_, in, n_ * sizeof(std::complex<double>));
    fftw_execute(static_cast<fftw_plan>(fwd_plan_));
    std::memcpy(out, buf_b_, n_ * sizeof(std::complex<double>));
}

void ComplexFft::inverse(const std::complex<double>* in, std::complex<double>* out) {
    std::memcpy(buf_a_, in, n_ * sizeof(std::complex<double>));
    fftw_execute(static_cast<fftw_plan>(inv_plan_));
    std::memcpy(out, buf_b_, n_ * sizeof(std::complex<double>));
}

} // namespace downbeat::detail
