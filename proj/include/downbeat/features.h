#pragma once

#include <string>
#include <vector>

#include "downbeat/audio.h"
#include "downbeat/mat.h"

namespace downbeat {

enum class FeatureKind { Chroma, Lfs, Odf, Mcqt };

const char* to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

// Bin count of the finished representation: 12 / 10 / 3 / 304.
std::size_t feature_bins(FeatureKind kind);

// Analysis parameters per representation (window/hop in ms, sample rate).
StftConfig stft_config_for(FeatureKind kind);

struct FeatureMatrix {
    FeatureKind kind = FeatureKind::Chroma;
    Mat values;                      // frames x bins, nonnegative
    std::vector<double> frame_times; // seconds

    std::size_t frames() const { return values.rows; }
    std::size_t bins() const { return values.cols; }
};

// Constant-Q filter bank realized as one weighting row per bin over the
// magnitude spectrum of an STFT.
struct CqtKernel {
    std::vector<double> center_freqs;       // Hz, geometric with ratio 2^(1/bpo)
    std::vector<std::size_t> window_lengths; // equivalent time support, samples
    std::size_t bins_per_octave = 0;
    // Sparse rows: per CQT bin, the covered FFT bins and their weights
    // (each row sums to 1).
    std::vector<std::vector<std::pair<std::size_t, double>>> rows;

    std::size_t bins() const { return center_freqs.size(); }
};

CqtKernel build_cqt_kernel(std::size_t n_bins, std::size_t bins_per_octave, double f_min,
                           double sample_rate, std::size_t fft_size);

// Applies the kernel to every frame of a magnitude STFT.
Mat apply_cqt(const CqtKernel& kernel, const SpectralFrameSeries& spec);

// 12-bin tuned chroma: 108-bin constant-Q (36 per octave), octave fold to 36
// pitch classes, tuning shift, time median filter of length 8, triple
// averaging.
FeatureMatrix compute_chroma(const SpectralFrameSeries& spec);

// Low-frequency spectrogram: the first 10 STFT bins (< 150 Hz at the 500 Hz
// rate), clipped at the 9th decile.
FeatureMatrix compute_lfs(const SpectralFrameSeries& spec);

// Three-band spectral-flux onset detection function with mu-law compression
// (mu = 1e6), local-mean subtraction and half-wave rectification; bands
// [0,150), [150,500), [500,11025] Hz.
FeatureMatrix compute_odf(const SpectralFrameSeries& spec);

// The rectified band flux the ODF is built from, before the decile clip.
Mat compute_odf_flux(const SpectralFrameSeries& spec);

// Melodic constant-Q transform: 96 bins/octave from 196 Hz, octave-averaged,
// restricted to 304 bins (392-3520 Hz), log-compressed, and thresholded at
// the per-frame third quartile.
FeatureMatrix compute_mcqt(const SpectralFrameSeries& spec);

// Convenience dispatcher; `spec` must have been computed with
// stft_config_for(kind).
FeatureMatrix compute_feature(FeatureKind kind, const SpectralFrameSeries& spec);

// Replaces every value above the given quantile of the flattened matrix by
// that quantile. The cap is the nearest-rank quantile of the nonzero
// entries (idempotent; an all-zero matrix is returned unchanged).
Mat decile_clip(const Mat& values, double quantile);

} // namespace downbeat
