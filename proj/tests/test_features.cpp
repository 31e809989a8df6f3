#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "downbeat/audio.h"
#include "downbeat/error.h"
#include "downbeat/features.h"
#include "downbeat/rng.h"
#include "test_util.h"

using namespace downbeat;
using namespace testutil;

namespace {

FeatureMatrix feature_of(const AudioClip& clip, FeatureKind kind) {
    return compute_feature(kind, stft_magnitude(clip, stft_config_for(kind)));
}

std::size_t frame_argmax(const FeatureMatrix& f, std::size_t t) {
    const double* row = f.values.row_ptr(t);
    return static_cast<std::size_t>(std::max_element(row, row + f.bins()) - row);
}

// Time-averaged profile normalized to unit sum.
std::vector<double> mean_profile(const FeatureMatrix& f, std::size_t lo, std::size_t hi) {
    std::vector<double> mean(f.bins(), 0.0);
    for (std::size_t t = lo; t < hi; ++t) {
        for (std::size_t b = 0; b < f.bins(); ++b) mean[b] += f.values(t, b);
    }
    double sum = 0.0;
    for (double v : mean) sum += v;
    if (sum > 0) {
        for (double& v : mean) v /= sum;
    }
    return mean;
}

} // namespace

TEST_CASE("chroma of silence is zero with 12 bins") {
    const FeatureMatrix f = feature_of(make_silence(2.0, 5512.5), FeatureKind::Chroma);
    CHECK(f.bins() == 12);
    for (double v : f.values.data) CHECK(v == 0.0);
}

TEST_CASE("chroma argmax of a 440 Hz tone is pitch class A") {
    const FeatureMatrix f = feature_of(make_tone(440.0, 3.0, 5512.5), FeatureKind::Chroma);
    for (std::size_t t = 2; t + 2 < f.frames(); ++t) {
        CHECK(frame_argmax(f, t) == 9); // C=0 ... A=9
    }
}

TEST_CASE("chroma of a C major triad peaks on C, E and G") {
    const FeatureMatrix f =
        feature_of(make_chord({261.63, 329.63, 392.0}, 3.0, 5512.5), FeatureKind::Chroma);
    const std::size_t mid = f.frames() / 2;
    std::vector<std::size_t> order(12);
    for (std::size_t i = 0; i < 12; ++i) order[i] = i;
    const double* row = f.values.row_ptr(mid);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return row[a] > row[b];
    });
    std::vector<std::size_t> top(order.begin(), order.begin() + 3);
    std::sort(top.begin(), top.end());
    CHECK(top == std::vector<std::size_t>{0, 4, 7});
}

TEST_CASE("transposing a tone by one semitone rotates the chroma") {
    const double base = 329.63; // E4, mid-range
    const FeatureMatrix fa = feature_of(make_tone(base, 3.0, 5512.5), FeatureKind::Chroma);
    const FeatureMatrix fb =
        feature_of(make_tone(base * std::pow(2.0, 1.0 / 12.0), 3.0, 5512.5), FeatureKind::Chroma);
    const std::size_t lo = fa.frames() / 4, hi = 3 * fa.frames() / 4;
    const std::vector<double> pa = mean_profile(fa, lo, hi);
    const std::vector<double> pb = mean_profile(fb, lo, hi);
    for (std::size_t b = 0; b < 12; ++b) {
        CHECK(std::abs(pb[(b + 1) % 12] - pa[b]) < 0.10);
    }
}

TEST_CASE("lfs keeps ten bins and finds a 100 Hz tone in bin 6") {
    const FeatureMatrix f = feature_of(make_tone(100.0, 2.0, 500.0), FeatureKind::Lfs);
    CHECK(f.bins() == 10);
    for (std::size_t t = 2; t + 2 < f.frames(); ++t) CHECK(frame_argmax(f, t) == 6);
}

TEST_CASE("lfs of silence stays zero") {
    const FeatureMatrix f = feature_of(make_silence(1.0, 500.0), FeatureKind::Lfs);
    for (double v : f.values.data) CHECK(v == 0.0);
}

TEST_CASE("decile clip caps values at the quantile") {
    Mat m(1, 10);
    for (std::size_t i = 0; i < 10; ++i) m(0, i) = static_cast<double>(i + 1);
    const Mat clipped = decile_clip(m, 0.9);
    CHECK(*std::max_element(clipped.data.begin(), clipped.data.end()) == 9.0); // 9th decile of 1..10
    std::size_t unchanged = 0;
    for (std::size_t i = 0; i < 10; ++i) {
        if (clipped.data[i] == m.data[i]) ++unchanged;
    }
    CHECK(unchanged == 9);
}

TEST_CASE("decile clip leaves a constant matrix unchanged") {
    Mat m(3, 4, 2.5);
    CHECK(decile_clip(m, 0.9).data == m.data);
}

TEST_CASE("decile clip agrees with a sort-based quantile oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Mat m(5, 7);
        for (double& v : m.data) v = rng.uniform(0.0, 10.0);
        const Mat clipped = decile_clip(m, 0.9);

        std::vector<double> sorted = m.data; // all entries nonzero here
        std::sort(sorted.begin(), sorted.end());
        const auto rank = static_cast<std::size_t>(
            std::ceil(0.9 * static_cast<double>(sorted.size())));
        const double expected = sorted[rank - 1];
        CHECK(*std::max_element(clipped.data.begin(), clipped.data.end()) == expected);
    }
}

TEST_CASE("decile clip is idempotent") {
    Rng rng(12);
    Mat m(6, 5);
    for (double& v : m.data) v = rng.uniform(0.0, 1.0);
    const Mat once = decile_clip(m, 0.9);
    const Mat twice = decile_clip(once, 0.9);
    CHECK(once.data == twice.data);
}

TEST_CASE("odf of silence is zero with three bands") {
    const FeatureMatrix f = feature_of(make_silence(2.0, 44100.0), FeatureKind::Odf);
    CHECK(f.bins() == 3);
    for (double v : f.values.data) CHECK(v == 0.0);
}

TEST_CASE("a broadband click peaks once per band at the click") {
    const double t0 = 1.0;
    AudioClip clip = make_silence(2.0, 44100.0);
    Rng rng(3);
    const auto s0 = static_cast<std::size_t>(t0 * 44100.0);
    for (std::size_t i = 0; i < 200; ++i) clip.samples[s0 + i] = rng.uniform(-0.9, 0.9);

    const FeatureMatrix f = feature_of(clip, FeatureKind::Odf);
    for (std::size_t band = 0; band < 3; ++band) {
        std::size_t argmax = 0;
        for (std::size_t t = 0; t < f.frames(); ++t) {
            if (f.values(t, band) > f.values(argmax, band)) argmax = t;
        }
        const double frame_dt = f.frame_times[1] - f.frame_times[0];
        CHECK(std::abs(f.frame_times[argmax] - t0) <= 1.5 * frame_dt + 0.012);
    }
}

TEST_CASE("steady tone decays to near zero after the attack") {
    // Measured on the rectified flux (the stage before the decile clip,
    // which would equalize the attack with everything else on this input).
    const AudioClip tone = make_tone(880.0, 3.0, 44100.0);
    const SpectralFrameSeries spec = stft_magnitude(tone, stft_config_for(FeatureKind::Odf));
    const Mat flux = compute_odf_flux(spec);
    double attack = 0.0;
    for (std::size_t t = 0; t < flux.rows; ++t) attack = std::max(attack, flux(t, 2));
    REQUIRE(attack > 0.0);
    // Steady-state region: from 1 s in (well past the attack and the local
    // mean window) to 0.5 s before the end.
    for (std::size_t t = 0; t < flux.rows; ++t) {
        if (spec.frame_times[t] < 1.0 || spec.frame_times[t] > 2.5) continue;
        CHECK(flux(t, 2) <= 0.01 * attack);
    }
}

TEST_CASE("odf is nonnegative for arbitrary input") {
    Rng rng(5);
    AudioClip clip = make_silence(1.5, 44100.0);
    for (double& s : clip.samples) s = rng.uniform(-0.5, 0.5);
    const FeatureMatrix f = feature_of(clip, FeatureKind::Odf);
    for (double v : f.values.data) CHECK(v >= 0.0);
}

TEST_CASE("mcqt zeroes at least three quarters of every frame") {
    Rng rng(9);
    AudioClip clip = make_silence(1.0, 11025.0);
    for (double& s : clip.samples) s = rng.uniform(-0.5, 0.5);
    const FeatureMatrix f = feature_of(clip, FeatureKind::Mcqt);
    CHECK(f.bins() == 304);
    for (std::size_t t = 0; t < f.frames(); ++t) {
        std::size_t nonzero = 0;
        for (std::size_t b = 0; b < 304; ++b) {
            if (f.values(t, b) > 0.0) ++nonzero;
        }
        CHECK(nonzero <= 76);
    }
}

TEST_CASE("mcqt concentrates a 440 Hz tone on its bin and octave images") {
    const FeatureMatrix f = feature_of(make_tone(440.0, 2.0, 11025.0), FeatureKind::Mcqt);
    // 440 Hz sits 96*log2(440/196) = 112 constant-Q bins above 196 Hz; the
    // restricted axis starts at bin 96, and octave averaging mirrors the
    // tone at +96 and +192.
    const std::vector<double> centers = {16.0, 112.0, 208.0};
    auto nearest = [&](std::size_t b) {
        double dist = 1e9;
        for (double c : centers) dist = std::min(dist, std::abs(static_cast<double>(b) - c));
        return dist;
    };
    for (std::size_t t = 4; t + 4 < f.frames(); ++t) {
        const double* row = f.values.row_ptr(t);
        const auto argmax = static_cast<std::size_t>(std::max_element(row, row + 304) - row);
        REQUIRE(row[argmax] > 0.0);
        CHECK(nearest(argmax) <= 2.0);
        // The tone line has finite spectral width under the STFT kernel, so
        // require 90% of the frame mass near the expected centers rather
        // than exact support.
        double total = 0.0, near = 0.0;
        for (std::size_t b = 0; b < 304; ++b) {
            total += row[b];
            if (nearest(b) <= 8.0) near += row[b];
        }
        CHECK(near >= 0.9 * total);
    }
}

TEST_CASE("mcqt of silence is zero") {
    const FeatureMatrix f = feature_of(make_silence(1.0, 11025.0), FeatureKind::Mcqt);
    for (double v : f.values.data) CHECK(v == 0.0);
}

TEST_CASE("extractors are deterministic") {
    Rng rng(21);
    AudioClip clip = make_silence(1.5, 44100.0);
    for (double& s : clip.samples) s = rng.uniform(-0.5, 0.5);
    for (FeatureKind kind :
         {FeatureKind::Chroma, FeatureKind::Lfs, FeatureKind::Odf, FeatureKind::Mcqt}) {
        const AudioClip at_rate = resample(clip, stft_config_for(kind).sample_rate);
        const FeatureMatrix a = feature_of(at_rate, kind);
        const FeatureMatrix b = feature_of(at_rate, kind);
        CHECK(a.values.data == b.values.data);
        CHECK(a.bins() == feature_bins(kind));
        for (double v : a.values.data) CHECK(v >= 0.0);
    }
}
