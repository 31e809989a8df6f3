#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "downbeat/audio.h"
#include "downbeat/error.h"
#include "downbeat/features.h"
#include "downbeat/rng.h"
#include "test_util.h"

using namespace downbeat;
using namespace testutil;

namespace {

// Minimal WAV writer for cases save_wav does not cover (stereo, odd formats).
void write_wav_raw(const std::string& path, std::uint16_t format, std::uint16_t channels,
                   std::uint32_t sample_rate, std::uint16_t bits,
                   const std::vector<std::int16_t>& interleaved) {
    std::ofstream out(path, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    const std::uint32_t data_len = static_cast<std::uint32_t>(interleaved.size() * 2);
    out.write("RIFF", 4);
    u32(36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    u32(16);
    u16(format);
    u16(channels);
    u32(sample_rate);
    u32(sample_rate * channels * 2);
    u16(static_cast<std::uint16_t>(channels * 2));
    u16(bits);
    out.write("data", 4);
    u32(data_len);
    out.write(reinterpret_cast<const char*>(interleaved.data()), data_len);
}

double rms(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += v[i] * v[i];
    return std::sqrt(acc / static_cast<double>(hi - lo));
}

} // namespace

TEST_CASE("wav round trip keeps header arithmetic") {
    TempDir dir("wav");
    const AudioClip tone = make_tone(440.0, 1.0, 44100.0);
    save_wav(dir.str() + "/tone.wav", tone);
    const AudioClip loaded = load_audio(dir.str() + "/tone.wav");
    CHECK(loaded.samples.size() == 44100);
    CHECK(loaded.sample_rate == doctest::Approx(44100.0));
    CHECK(loaded.duration() == doctest::Approx(1.0));
    for (std::size_t i = 0; i < 200; ++i) {
        CHECK(loaded.samples[i] == doctest::Approx(tone.samples[i]).epsilon(1e-3));
    }
}

TEST_CASE("opposite stereo channels cancel to silence") {
    TempDir dir("wav");
    std::vector<std::int16_t> frames;
    for (int i = 0; i < 1000; ++i) {
        const auto v = static_cast<std::int16_t>(5000 * std::sin(0.01 * i));
        frames.push_back(v);
        frames.push_back(static_cast<std::int16_t>(-v));
    }
    write_wav_raw(dir.str() + "/stereo.wav", 1, 2, 8000, 16, frames);
    const AudioClip clip = load_audio(dir.str() + "/stereo.wav");
    CHECK(clip.samples.size() == 1000);
    for (double s : clip.samples) CHECK(s == 0.0);
}

TEST_CASE("mu-law encoding is rejected by name") {
    TempDir dir("wav");
    write_wav_raw(dir.str() + "/mulaw.wav", 7, 1, 8000, 8, std::vector<std::int16_t>(100, 0));
    try {
        load_audio(dir.str() + "/mulaw.wav");
        FAIL("expected a format error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Pipeline);
        CHECK(std::string(e.what()).find("mu-law") != std::string::npos);
    }
}

TEST_CASE("missing file reports a missing resource") {
    try {
        load_audio("/nonexistent/path.wav");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Missing);
    }
}

TEST_CASE("resampling to the same rate is the identity") {
    const AudioClip tone = make_tone(440.0, 0.5, 44100.0);
    const AudioClip out = resample(tone, 44100.0);
    CHECK(out.samples == tone.samples);
}

TEST_CASE("downsampled tone matches the analytic waveform") {
    const AudioClip tone = make_tone(100.0, 2.0, 44100.0);
    const AudioClip out = resample(tone, 500.0);
    CHECK(out.sample_rate == doctest::Approx(500.0));
    CHECK(std::abs(static_cast<double>(out.samples.size()) / 500.0 - 2.0) <= 1.0 / 500.0);

    const std::size_t lo = out.samples.size() / 10;
    const std::size_t hi = out.samples.size() - lo;
    double max_err = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
        const double expected = 0.5 * std::sin(2.0 * kPi * 100.0 * static_cast<double>(k) / 500.0);
        max_err = std::max(max_err, std::abs(out.samples[k] - expected));
    }
    CHECK(max_err < 0.005); // 1% of the 0.5 amplitude

    const double r = rms(out.samples, lo, hi);
    CHECK(r == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(0.01));
}

TEST_CASE("content above the target Nyquist is attenuated") {
    const AudioClip tone = make_tone(1000.0, 2.0, 44100.0);
    const AudioClip out = resample(tone, 500.0);
    const std::size_t lo = out.samples.size() / 10;
    const double in_rms = rms(tone.samples, 0, tone.samples.size());
    const double out_rms = rms(out.samples, lo, out.samples.size() - lo);
    CHECK(out_rms < 0.05 * in_rms);
}

TEST_CASE("round trip through a lower rate preserves a low tone") {
    const AudioClip tone = make_tone(440.0, 2.0, 44100.0);
    const AudioClip down = resample(tone, 5512.5);
    const AudioClip back = resample(down, 44100.0);
    const std::size_t lo = back.samples.size() / 10;
    const std::size_t hi = std::min(back.samples.size(), tone.samples.size()) - lo;
    double err = 0.0, ref = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        err += (back.samples[i] - tone.samples[i]) * (back.samples[i] - tone.samples[i]);
        ref += tone.samples[i] * tone.samples[i];
    }
    CHECK(std::sqrt(err / ref) < 0.02);
}

TEST_CASE("analysis parameters resolve to the documented sample counts") {
    const StftConfig chroma = stft_config_for(FeatureKind::Chroma);
    CHECK(chroma.window_samples() == 4096);
    CHECK(chroma.hop_samples() == 508);
    const StftConfig lfs = stft_config_for(FeatureKind::Lfs);
    CHECK(lfs.window_samples() == 32);
    CHECK(lfs.hop_samples() == 4);
    const StftConfig odf = stft_config_for(FeatureKind::Odf);
    CHECK(odf.window_samples() == 1024);
    CHECK(odf.hop_samples() == 512);
    const StftConfig mcqt = stft_config_for(FeatureKind::Mcqt);
    CHECK(mcqt.window_samples() == 2048);
    CHECK(mcqt.hop_samples() == 128);
}

TEST_CASE("stft of silence is all zero") {
    const SpectralFrameSeries spec =
        stft_magnitude(make_silence(1.0, 44100.0), stft_config_for(FeatureKind::Odf));
    for (double v : spec.magnitudes.data) CHECK(v == 0.0);
}

TEST_CASE("stft argmax lands on the tone bin") {
    const AudioClip tone = make_tone(1000.0, 1.0, 44100.0);
    const SpectralFrameSeries spec = stft_magnitude(tone, stft_config_for(FeatureKind::Odf));
    const double bin_width = 44100.0 / 1024.0;
    for (std::size_t t = 1; t + 1 < spec.frames(); ++t) {
        const double* row = spec.magnitudes.row_ptr(t);
        std::size_t argmax = 0;
        for (std::size_t b = 1; b < spec.bins(); ++b) {
            if (row[b] > row[argmax]) argmax = b;
        }
        CHECK(std::abs(spec.bin_freqs[argmax] - 1000.0) <= bin_width);
    }
}

TEST_CASE("input shorter than one window is rejected") {
    CHECK_THROWS_AS(stft_magnitude(make_silence(0.01, 44100.0), stft_config_for(FeatureKind::Odf)),
                    Error);
}

TEST_CASE("frame count formula holds for random clip lengths") {
    Rng rng(42);
    const StftConfig config = stft_config_for(FeatureKind::Odf);
    const std::size_t window = config.window_samples();
    const std::size_t hop = config.hop_samples();
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = window + rng.uniform_index(40000);
        AudioClip clip;
        clip.sample_rate = config.sample_rate;
        clip.samples.assign(n, 0.0);
        const SpectralFrameSeries spec = stft_magnitude(clip, config);
        const std::size_t expected = (n - window + hop - 1) / hop + 1;
        CHECK(spec.frames() == expected);
        CHECK(spec.frames() == stft_frame_count(n, window, hop));
        // Every sample is inside some frame.
        CHECK((spec.frames() - 1) * hop + window >= n);
        // Frame times advance by exactly one hop.
        for (std::size_t t = 1; t < spec.frames(); ++t) {
            CHECK(spec.frame_times[t] - spec.frame_times[t - 1] ==
                  doctest::Approx(hop / config.sample_rate).epsilon(1e-12));
        }
    }
}

TEST_CASE("spectral energy of a frame obeys the Parseval bound") {
    Rng rng(7);
    AudioClip clip;
    clip.sample_rate = 44100.0;
    clip.samples.resize(4096);
    for (double& s : clip.samples) s = rng.uniform(-1.0, 1.0);
    const StftConfig config{23.2, 11.6, 44100.0};
    const std::size_t window = config.window_samples();
    const SpectralFrameSeries spec = stft_magnitude(clip, config);

    std::vector<double> hann(window);
    for (std::size_t i = 0; i < window; ++i) {
        hann[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / window));
    }
    for (std::size_t t = 0; t + 1 < spec.frames(); ++t) {
        double time_energy = 0.0;
        for (std::size_t i = 0; i < window; ++i) {
            const double s = clip.samples[t * config.hop_samples() + i] * hann[i];
            time_energy += s * s;
        }
        double spec_energy = 0.0;
        const double* row = spec.magnitudes.row_ptr(t);
        for (std::size_t b = 0; b < spec.bins(); ++b) {
            const double c = (b == 0 || b == spec.bins() - 1) ? 1.0 : 2.0;
            spec_energy += c * row[b] * row[b];
        }
        // One-sided Parseval: sum c_k |X_k|^2 = window * time energy.
        CHECK(spec_energy <= static_cast<double>(window) * time_energy * (1.0 + 1e-9) + 1e-12);
        CHECK(spec_energy == doctest::Approx(static_cast<double>(window) * time_energy)
                                 .epsilon(1e-9));
    }
}
