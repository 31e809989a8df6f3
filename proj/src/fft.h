#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace downbeat::detail {

// Thin RAII wrappers over FFTW plans. Plan creation is serialized internally
// (the FFTW planner is not thread-safe); executing distinct instances from
// different threads is fine.

class RealFft {
public:
    explicit RealFft(std::size_t n);
    ~RealFft();
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::size_t size() const { return n_; }
    // in: n real samples; out: n/2 + 1 complex bins.
    void forward(const double* in, std::complex<double>* out);

private:
    std::size_t n_;
    void* plan_;
    double* in_buf_;
    void* out_buf_;
};

class ComplexFft {
public:
    explicit ComplexFft(std::size_t n);
    ~ComplexFft();
    ComplexFft(const ComplexFft&) = delete;
    ComplexFft& operator=(const ComplexFft&) = delete;

    std::size_t size() const { return n_; }
    void forward(const std::complex<double>* in, std::complex<double>* out);
    // Unnormalized inverse; caller divides by n.
    void inverse(const std::complex<double>* in, std::complex<double>* out);

private:
    std::size_t n_;
    void* fwd_plan_;
    void* inv_plan_;
    void* buf_a_;
    void* buf_b_;
};

std::size_t next_pow2(std::size_t n);

} // namespace downbeat::detail
