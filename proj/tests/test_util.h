#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "downbeat/audio.h"

namespace testutil {

constexpr double kPi = std::numbers::pi;

inline downbeat::AudioClip make_silence(double duration, double sample_rate) {
    downbeat::AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.assign(static_cast<std::size_t>(std::llround(duration * sample_rate)), 0.0);
    return clip;
}

inline downbeat::AudioClip make_tone(double freq, double duration, double sample_rate,
                                     double amp = 0.5) {
    downbeat::AudioClip clip = make_silence(duration, sample_rate);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] = amp * std::sin(2.0 * kPi * freq * static_cast<double>(i) / sample_rate);
    }
    return clip;
}

inline downbeat::AudioClip make_chord(const std::vector<double>& freqs, double duration,
                                      double sample_rate, double amp = 0.25) {
    downbeat::AudioClip clip = make_silence(duration, sample_rate);
    for (double f : freqs) {
        for (std::size_t i = 0; i < clip.samples.size(); ++i) {
            clip.samples[i] +=
                amp * std::sin(2.0 * kPi * f * static_cast<double>(i) / sample_rate);
        }
    }
    return clip;
}

// Short enveloped sine bursts at the click times.
inline downbeat::AudioClip make_click_track(const std::vector<double>& click_times,
                                            double duration, double sample_rate,
                                            double click_freq = 1500.0, double amp = 0.8) {
    downbeat::AudioClip clip = make_silence(duration, sample_rate);
    const auto burst = static_cast<std::size_t>(0.012 * sample_rate);
    for (double t : click_times) {
        const auto s0 = static_cast<std::size_t>(std::llround(t * sample_rate));
        for (std::size_t i = 0; i < burst && s0 + i < clip.samples.size(); ++i) {
            const double u = static_cast<double>(i) / sample_rate;
            clip.samples[s0 + i] +=
                amp * std::exp(-u * 250.0) * std::sin(2.0 * kPi * click_freq * u);
        }
    }
    return clip;
}

inline std::vector<double> periodic_times(double period, double start, double end) {
    std::vector<double> times;
    for (double t = start; t < end; t += period) times.push_back(t);
    return times;
}

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("downbeat_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

} // namespace testutil
