#include "downbeat/features.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "downbeat/error.h"

namespace downbeat {

namespace {

constexpr double kPi = std::numbers::pi;

// Chroma constant-Q: 3 octaves upward from C3, 36 bins per octave, so the
// folded profile has pitch class C at bin 0 and three bins per semitone.
constexpr double kChromaFmin = 130.8127826502993;
constexpr std::size_t kChromaCqtBins = 108;
constexpr std::size_t kChromaBpo = 36;

constexpr double kMcqtFmin = 196.0;
constexpr std::size_t kMcqtBpo = 96;
constexpr std::size_t kMcqtLowBin = 96;  // 392 Hz
constexpr std::size_t kMcqtBins = 304;   // up to two semitones above 3 octaves

constexpr double kMuLaw = 1e6;
constexpr double kClipDecile = 0.9;
constexpr double kOdfLocalMeanSeconds = 0.5;
// Bins below -80 dB of the clip maximum are leakage/quantization noise;
// the compressor treats them as silence (soft floor, keeps c continuous).
constexpr double kOdfSpectralFloor = 1e-4;

double quantile_linear(std::vector<double> values, double q) {
    if (values.empty()) throw usage_error("quantile of empty data");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double median_of(std::vector<double>& scratch) {
    std::sort(scratch.begin(), scratch.end());
    const std::size_t n = scratch.size();
    if (n % 2 == 1) return scratch[n / 2];
    return 0.5 * (scratch[n / 2 - 1] + scratch[n / 2]);
}

// Fold the 108-bin constant-Q spectrum onto 36 pitch classes per frame.
Mat fold_to_pitch_classes(const Mat& cq) {
    Mat out(cq.rows, kChromaBpo);
    for (std::size_t t = 0; t < cq.rows; ++t) {
        for (std::size_t k = 0; k < cq.cols; ++k) {
            out(t, k % kChromaBpo) += cq(t, k);
        }
    }
    return out;
}

// Estimated deviation of spectral peaks from the 3-bin semitone grid, as a
// signed bin count in [-1.5, 1.5). Peaks of the time-averaged profile are
// refined by parabolic interpolation and combined circularly.
double tuning_deviation(const Mat& profile) {
    std::vector<double> mean(kChromaBpo, 0.0);
    for (std::size_t t = 0; t < profile.rows; ++t) {
        for (std::size_t b = 0; b < kChromaBpo; ++b) mean[b] += profile(t, b);
    }
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t b = 0; b < kChromaBpo; ++b) {
        const double left = mean[(b + kChromaBpo - 1) % kChromaBpo];
        const double mid = mean[b];
        const double right = mean[(b + 1) % kChromaBpo];
        if (mid <= 0.0 || mid < left || mid < right) continue;
        const double denom = left - 2.0 * mid + right;
        double offset = 0.0;
        if (std::abs(denom) > 1e-12) offset = std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
        const double pos = static_cast<double>(b) + offset;
        double dev = std::fmod(pos, 3.0);
        if (dev >= 1.5) dev -= 3.0;
        acc += mid * std::polar(1.0, 2.0 * kPi * dev / 3.0);
    }
    if (std::abs(acc) < 1e-12) return 0.0;
    return std::arg(acc) / (2.0 * kPi) * 3.0;
}

Mat circular_shift_cols(const Mat& m, long long shift) {
    Mat out(m.rows, m.cols);
    const long long n = static_cast<long long>(m.cols);
    for (std::size_t t = 0; t < m.rows; ++t) {
        for (long long b = 0; b < n; ++b) {
            out(t, static_cast<std::size_t>(b)) =
                m(t, static_cast<std::size_t>(((b + shift) % n + n) % n));
        }
    }
    return out;
}

// Median filter of length 8 along time, window [t-4, t+3] truncated at the
// edges.
Mat median_filter_time(const Mat& m) {
    Mat out(m.rows, m.cols);
    std::vector<double> scratch;
    for (std::size_t b = 0; b < m.cols; ++b) {
        for (std::size_t t = 0; t < m.rows; ++t) {
            const long long lo = std::max<long long>(0, static_cast<long long>(t) - 4);
            const long long hi = std::min<long long>(static_cast<long long>(m.rows) - 1,
                                                     static_cast<long long>(t) + 3);
            scratch.clear();
            for (long long u = lo; u <= hi; ++u) scratch.push_back(m(static_cast<std::size_t>(u), b));
            out(t, b) = median_of(scratch);
        }
    }
    return out;
}

} // namespace

const char* to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::Chroma: return "chroma";
        case FeatureKind::Lfs: return "lfs";
        case FeatureKind::Odf: return "odf";
        case FeatureKind::Mcqt: return "mcqt";
    }
    return "?";
}

FeatureKind feature_kind_from_string(const std::string& name) {
    if (name == "chroma") return FeatureKind::Chroma;
    if (name == "lfs") return FeatureKind::Lfs;
    if (name == "odf") return FeatureKind::Odf;
    if (name == "mcqt") return FeatureKind::Mcqt;
    throw usage_error("unknown feature kind: " + name);
}

std::size_t feature_bins(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::Chroma: return 12;
        case FeatureKind::Lfs: return 10;
        case FeatureKind::Odf: return 3;
        case FeatureKind::Mcqt: return 304;
    }
    return 0;
}

StftConfig stft_config_for(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::Chroma: return {743.0, 92.2, 5512.5};
        case FeatureKind::Lfs: return {64.0, 8.0, 500.0};
        case FeatureKind::Odf: return {23.2, 11.6, 44100.0};
        case FeatureKind::Mcqt: return {185.8, 11.6, 11025.0};
    }
    return {};
}

CqtKernel build_cqt_kernel(std::size_t n_bins, std::size_t bins_per_octave, double f_min,
                           double sample_rate, std::size_t fft_size) {
    if (n_bins == 0 || bins_per_octave == 0) throw usage_error("empty constant-Q kernel");
    const double nyquist = sample_rate / 2.0;
    const double q_factor = 1.0 / (std::pow(2.0, 1.0 / static_cast<double>(bins_per_octave)) - 1.0);
    const double bin_width = sample_rate / static_cast<double>(fft_size);
    const std::size_t n_fft_bins = fft_size / 2 + 1;

    CqtKernel kernel;
    kernel.bins_per_octave = bins_per_octave;
    kernel.center_freqs.reserve(n_bins);
    kernel.rows.reserve(n_bins);

    for (std::size_t k = 0; k < n_bins; ++k) {
        const double f = f_min * std::pow(2.0, static_cast<double>(k) / bins_per_octave);
        if (f >= nyquist) throw usage_error("constant-Q bin above Nyquist");
        kernel.center_freqs.push_back(f);
        kernel.window_lengths.push_back(
            static_cast<std::size_t>(std::ceil(q_factor * sample_rate / f)));

        // Hann-shaped weighting over the FFT bins inside the Q bandwidth,
        // never narrower than two FFT bins so every row has support.
        const double half_bw = std::max(f / q_factor / 2.0, bin_width);
        const auto b0 = static_cast<std::size_t>(
            std::max(0.0, std::ceil((f - half_bw) / bin_width)));
        const auto b1 = std::min<std::size_t>(
            n_fft_bins - 1, static_cast<std::size_t>(std::floor((f + half_bw) / bin_width)));
        std::vector<std::pair<std::size_t, double>> row;
        double sum = 0.0;
        for (std::size_t b = b0; b <= b1 && b < n_fft_bins; ++b) {
            const double d = (static_cast<double>(b) * bin_width - f) / half_bw;
            const double w = 0.5 * (1.0 + std::cos(kPi * std::clamp(d, -1.0, 1.0)));
            if (w <= 0.0) continue;
            row.emplace_back(b, w);
            sum += w;
        }
        if (row.empty()) {
            const auto nearest = static_cast<std::size_t>(
                std::min<double>(n_fft_bins - 1.0, std::round(f / bin_width)));
            row.emplace_back(nearest, 1.0);
            sum = 1.0;
        }
        for (auto& [bin, w] : row) w /= sum;
        kernel.rows.push_back(std::move(row));
    }
    return kernel;
}

Mat apply_cqt(const CqtKernel& kernel, const SpectralFrameSeries& spec) {
    Mat out(spec.frames(), kernel.bins());
    for (std::size_t t = 0; t < spec.frames(); ++t) {
        const double* mags = spec.magnitudes.row_ptr(t);
        double* row = out.row_ptr(t);
        for (std::size_t k = 0; k < kernel.bins(); ++k) {
            double acc = 0.0;
            for (const auto& [bin, w] : kernel.rows[k]) acc += w * mags[bin];
            row[k] = acc;
        }
    }
    return out;
}

FeatureMatrix compute_chroma(const SpectralFrameSeries& spec) {
    const CqtKernel kernel = build_cqt_kernel(kChromaCqtBins, kChromaBpo, kChromaFmin,
                                              spec.sample_rate, spec.window_samples);
    const Mat cq = apply_cqt(kernel, spec);
    Mat profile = fold_to_pitch_classes(cq);

    const double dev = tuning_deviation(profile);
    const long long shift = std::llround(dev);
    if (shift != 0) profile = circular_shift_cols(profile, shift);

    profile = median_filter_time(profile);

    FeatureMatrix out;
    out.kind = FeatureKind::Chroma;
    out.frame_times = spec.frame_times;
    out.values = Mat(profile.rows, 12);
    for (std::size_t t = 0; t < profile.rows; ++t) {
        for (std::size_t p = 0; p < 12; ++p) {
            const std::size_t c = 3 * p;
            out.values(t, p) = (profile(t, (c + kChromaBpo - 1) % kChromaBpo) + profile(t, c) +
                                profile(t, (c + 1) % kChromaBpo)) /
                               3.0;
        }
    }
    return out;
}

FeatureMatrix compute_lfs(const SpectralFrameSeries& spec) {
    if (spec.bins() < 10) throw usage_error("LFS needs at least 10 STFT bins");
    Mat kept(spec.frames(), 10);
    for (std::size_t t = 0; t < spec.frames(); ++t) {
        for (std::size_t b = 0; b < 10; ++b) kept(t, b) = spec.magnitudes(t, b);
    }
    FeatureMatrix out;
    out.kind = FeatureKind::Lfs;
    out.frame_times = spec.frame_times;
    out.values = decile_clip(kept, kClipDecile);
    return out;
}

Mat compute_odf_flux(const SpectralFrameSeries& spec) {
    const std::size_t frames = spec.frames();
    const std::size_t bins = spec.bins();

    double max_mag = 0.0;
    for (double v : spec.magnitudes.data) max_mag = std::max(max_mag, v);

    // Per-bin mu-law compression of magnitudes scaled into [0, 1], with a
    // soft spectral floor: c(x) = max(0, ln((1+mu*x)/(1+mu*eps))) / ln(1+mu).
    Mat compressed(frames, bins);
    if (max_mag > 0.0) {
        const double denom = std::log1p(kMuLaw);
        const double floor_term = std::log1p(kMuLaw * kOdfSpectralFloor);
        for (std::size_t i = 0; i < compressed.data.size(); ++i) {
            const double x = spec.magnitudes.data[i] / max_mag;
            compressed.data[i] = std::max(0.0, std::log1p(kMuLaw * x) - floor_term) / denom;
        }
    }

    // Band assignment by bin center frequency.
    std::vector<int> band(bins, -1);
    for (std::size_t b = 0; b < bins; ++b) {
        const double f = spec.bin_freqs[b];
        if (f < 150.0) band[b] = 0;
        else if (f < 500.0) band[b] = 1;
        else if (f <= 11025.0) band[b] = 2;
    }

    // Temporal difference summed per band.
    Mat flux(frames, 3);
    for (std::size_t t = 1; t < frames; ++t) {
        const double* cur = compressed.row_ptr(t);
        const double* prev = compressed.row_ptr(t - 1);
        double* row = flux.row_ptr(t);
        for (std::size_t b = 0; b < bins; ++b) {
            if (band[b] >= 0) row[band[b]] += cur[b] - prev[b];
        }
    }

    // Subtract a centered local mean and half-wave rectify.
    const double frame_rate = spec.sample_rate / static_cast<double>(spec.hop_samples);
    const auto half = static_cast<long long>(std::llround(kOdfLocalMeanSeconds / 2.0 * frame_rate));
    Mat rectified(frames, 3);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t t = 0; t < frames; ++t) {
            const long long lo = std::max<long long>(0, static_cast<long long>(t) - half);
            const long long hi = std::min<long long>(static_cast<long long>(frames) - 1,
                                                     static_cast<long long>(t) + half);
            double mean = 0.0;
            for (long long u = lo; u <= hi; ++u) mean += flux(static_cast<std::size_t>(u), c);
            mean /= static_cast<double>(hi - lo + 1);
            rectified(t, c) = std::max(0.0, flux(t, c) - mean);
        }
    }
    return rectified;
}

FeatureMatrix compute_odf(const SpectralFrameSeries& spec) {
    FeatureMatrix out;
    out.kind = FeatureKind::Odf;
    out.frame_times = spec.frame_times;
    out.values = decile_clip(compute_odf_flux(spec), kClipDecile);
    return out;
}

FeatureMatrix compute_mcqt(const SpectralFrameSeries& spec) {
    const double nyquist = spec.sample_rate / 2.0;
    std::size_t n_bins = 0;
    while (kMcqtFmin * std::pow(2.0, static_cast<double>(n_bins) / kMcqtBpo) < nyquist) ++n_bins;
    if (n_bins < kMcqtLowBin + kMcqtBins) {
        throw usage_error("sample rate too low for the melodic constant-Q range");
    }

    const CqtKernel kernel =
        build_cqt_kernel(n_bins, kMcqtBpo, kMcqtFmin, spec.sample_rate, spec.window_samples);
    const Mat cq = apply_cqt(kernel, spec);

    FeatureMatrix out;
    out.kind = FeatureKind::Mcqt;
    out.frame_times = spec.frame_times;
    out.values = Mat(cq.rows, kMcqtBins);

    std::vector<double> frame(kMcqtBins);
    for (std::size_t t = 0; t < cq.rows; ++t) {
        // Average each bin with its in-range upper octaves, then compress.
        for (std::size_t i = 0; i < kMcqtBins; ++i) {
            const std::size_t k = kMcqtLowBin + i;
            double acc = 0.0;
            std::size_t count = 0;
            for (std::size_t j = k; j < n_bins; j += kMcqtBpo) {
                acc += cq(t, j);
                ++count;
            }
            frame[i] = std::log1p(acc / static_cast<double>(count));
        }
        const double q3 = quantile_linear(frame, 0.75);
        for (std::size_t i = 0; i < kMcqtBins; ++i) {
            out.values(t, i) = std::max(frame[i] - q3, 0.0);
        }
    }
    return out;
}

FeatureMatrix compute_feature(FeatureKind kind, const SpectralFrameSeries& spec) {
    switch (kind) {
        case FeatureKind::Chroma: return compute_chroma(spec);
        case FeatureKind::Lfs: return compute_lfs(spec);
        case FeatureKind::Odf: return compute_odf(spec);
        case FeatureKind::Mcqt: return compute_mcqt(spec);
    }
    throw usage_error("unknown feature kind");
}

Mat decile_clip(const Mat& values, double quantile) {
    if (values.empty()) throw usage_error("decile_clip of empty matrix");
    if (quantile <= 0.0 || quantile > 1.0) throw usage_error("clip quantile must be in (0, 1]");

    // The cap is the nearest-rank quantile of the active (nonzero) entries.
    // Rank-based caps keep the operation idempotent, and skipping exact
    // zeros keeps sparse matrices (clicks in silence) from being flattened
    // to the noise floor; an all-zero matrix passes through unchanged.
    std::vector<double> active;
    active.reserve(values.data.size());
    for (double v : values.data) {
        if (v != 0.0) active.push_back(v);
    }
    if (active.empty()) return values;
    std::sort(active.begin(), active.end());
    const auto rank = static_cast<std::size_t>(
        std::ceil(quantile * static_cast<double>(active.size())));
    const double cap = active[std::max<std::size_t>(rank, 1) - 1];

    Mat out = values;
    for (double& v : out.data) v = std::min(v, cap);
    return out;
}

} // namespace downbeat
