#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "downbeat/mat.h"

namespace downbeat {

// Mono audio, amplitudes in [-1, 1].
struct AudioClip {
    std::vector<double> samples;
    double sample_rate = 0.0;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

// Short-time analysis parameters. Sizes are specified in milliseconds and
// converted to samples by round(ms * sr / 1000); the window additionally
// snaps to a power of two when the rounded count is within one sample of it.
struct StftConfig {
    double window_ms = 0.0;
    double hop_ms = 0.0;
    double sample_rate = 0.0;

    std::size_t window_samples() const;
    std::size_t hop_samples() const;
};

struct SpectralFrameSeries {
    Mat magnitudes;                       // frames x bins, nonnegative
    std::vector<double> frame_times;      // seconds, frame centers
    std::vector<double> bin_freqs;        // Hz per bin
    double sample_rate = 0.0;
    std::size_t hop_samples = 0;
    std::size_t window_samples = 0;

    std::size_t frames() const { return magnitudes.rows; }
    std::size_t bins() const { return magnitudes.cols; }
};

// Reads a PCM WAV file (16/24-bit integer or 32-bit float, mono or stereo).
// Stereo is downmixed by channel average. Throws Error on unreadable files
// or unsupported encodings, naming the offending chunk or format code.
AudioClip load_audio(const std::string& path);

// Writes a mono clip as 16-bit PCM WAV, clamping to [-1, 1].
void save_wav(const std::string& path, const AudioClip& clip);

// Band-limited sample-rate conversion. Equal rates return the input
// unchanged; otherwise a windowed-sinc kernel with cutoff at the lower of
// the two Nyquist frequencies is applied.
AudioClip resample(const AudioClip& clip, double target_rate);

// Hann-window magnitude STFT. Frames start at multiples of the hop; the
// final partial frame is zero-padded so the whole clip is covered. Frame
// count is ceil((n_samples - window) / hop) + 1; requires at least one
// full window of input.
SpectralFrameSeries stft_magnitude(const AudioClip& clip, const StftConfig& config);

// Expected frame count of stft_magnitude for a clip of n samples.
std::size_t stft_frame_count(std::size_t n_samples, std::size_t window, std::size_t hop);

} // namespace downbeat
