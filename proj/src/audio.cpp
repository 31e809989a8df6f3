#include "downbeat/audio.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "downbeat/error.h"
#include "fft.h"

namespace downbeat {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::string format_name(std::uint16_t code) {
    switch (code) {
        case 2: return "ADPCM";
        case 6: return "a-law";
        case 7: return "mu-law";
        default: return "format " + std::to_string(code);
    }
}

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    return std::sin(kPi * x) / (kPi * x);
}

// Blackman taper over u in [-1, 1].
double blackman(double u) {
    if (std::abs(u) > 1.0) return 0.0;
    return 0.42 + 0.5 * std::cos(kPi * u) + 0.08 * std::cos(2.0 * kPi * u);
}

} // namespace

std::size_t StftConfig::window_samples() const {
    auto w = static_cast<std::size_t>(std::llround(window_ms * sample_rate / 1000.0));
    if (w == 0) throw usage_error("STFT window rounds to zero samples");
    std::size_t hi = detail::next_pow2(w);
    std::size_t lo = hi / 2;
    if (hi >= w && hi - w <= 1) return hi;
    if (lo >= 1 && w - lo <= 1) return lo;
    return w;
}

std::size_t StftConfig::hop_samples() const {
    auto h = static_cast<std::size_t>(std::llround(hop_ms * sample_rate / 1000.0));
    if (h == 0) throw usage_error("STFT hop rounds to zero samples");
    return h;
}

AudioClip load_audio(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw missing_error("cannot open audio file: " + path);

    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw pipeline_error("not a RIFF/WAVE file: " + path);
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t sample_rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;
    bool have_fmt = false;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        char id[5] = {0};
        std::memcpy(id, bytes.data() + pos, 4);
        std::uint32_t chunk_len = read_u32(bytes.data() + pos + 4);
        std::size_t body = pos + 8;
        if (body + chunk_len > bytes.size()) {
            throw pipeline_error(std::string("truncated WAV chunk '") + id + "' in " + path);
        }
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (chunk_len < 16) throw pipeline_error("malformed 'fmt ' chunk in " + path);
            format = read_u16(bytes.data() + body);
            channels = read_u16(bytes.data() + body + 2);
            sample_rate = read_u32(bytes.data() + body + 4);
            bits = read_u16(bytes.data() + body + 14);
            if (format == 0xFFFE && chunk_len >= 26) {
                // WAVE_FORMAT_EXTENSIBLE: the real format leads the sub-format GUID.
                format = read_u16(bytes.data() + body + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + body;
            data_len = chunk_len;
        }
        pos = body + chunk_len + (chunk_len & 1);
    }

    if (!have_fmt) throw pipeline_error("missing 'fmt ' chunk in " + path);
    if (!data) throw pipeline_error("missing 'data' chunk in " + path);
    if (format != 1 && format != 3) {
        throw pipeline_error("unsupported WAV encoding: " + format_name(format) + " in " + path);
    }
    if (channels < 1 || channels > 2) {
        throw pipeline_error("unsupported channel count " + std::to_string(channels) + " in " + path);
    }
    if (sample_rate == 0) throw pipeline_error("zero sample rate in " + path);

    const bool pcm = (format == 1);
    if (pcm && bits != 16 && bits != 24) {
        throw pipeline_error("unsupported PCM bit depth " + std::to_string(bits) + " in " + path);
    }
    if (!pcm && bits != 32) {
        throw pipeline_error("unsupported float bit depth " + std::to_string(bits) + " in " + path);
    }

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t stride = bytes_per_sample * channels;
    const std::size_t n_frames = data_len / stride;

    AudioClip clip;
    clip.sample_rate = static_cast<double>(sample_rate);
    clip.samples.resize(n_frames);

    for (std::size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const unsigned char* p = data + i * stride + ch * bytes_per_sample;
            double v = 0.0;
            if (pcm && bits == 16) {
                std::int16_t s;
                std::memcpy(&s, p, 2);
                v = static_cast<double>(s) / 32768.0;
            } else if (pcm && bits == 24) {
                std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
                if (s & 0x800000) s |= ~0xFFFFFF;
                v = static_cast<double>(s) / 8388608.0;
            } else {
                float f;
                std::memcpy(&f, p, 4);
                v = static_cast<double>(f);
            }
            acc += v;
        }
        clip.samples[i] = acc / channels;
    }
    return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw pipeline_error("cannot write audio file: " + path);

    const std::uint32_t sr = static_cast<std::uint32_t>(std::llround(clip.sample_rate));
    const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
    const std::uint32_t data_len = n * 2;

    auto put_u32 = [&](std::uint32_t v) {
        char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
        out.write(b, 4);
    };
    auto put_u16 = [&](std::uint16_t v) {
        char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
        out.write(b, 2);
    };

    out.write("RIFF", 4);
    put_u32(36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1); // PCM
    put_u16(1); // mono
    put_u32(sr);
    put_u32(sr * 2);
    put_u16(2);
    put_u16(16);
    out.write("data", 4);
    put_u32(data_len);

    for (double s : clip.samples) {
        double clamped = std::clamp(s, -1.0, 1.0);
        auto v = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
        put_u16(static_cast<std::uint16_t>(v));
    }
    if (!out) throw pipeline_error("write failed: " + path);
}

AudioClip resample(const AudioClip& clip, double target_rate) {
    if (target_rate <= 0) throw usage_error("resample target rate must be positive");
    if (clip.sample_rate <= 0) throw usage_error("clip has no sample rate");
    if (target_rate == clip.sample_rate) return clip;

    const double sr = clip.sample_rate;
    const double rho = std::min(1.0, target_rate / sr); // cutoff, fraction of input Nyquist
    constexpr double kLobes = 24.0;
    const double half_width = kLobes / rho;

    const std::size_t n_in = clip.samples.size();
    const auto n_out = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(static_cast<double>(n_in) * target_rate / sr)));

    AudioClip out;
    out.sample_rate = target_rate;
    out.samples.resize(n_out);

    const double* x = clip.samples.data();
    for (std::size_t k = 0; k < n_out; ++k) {
        const double center = static_cast<double>(k) * sr / target_rate;
        const long long m0 = std::max<long long>(0, static_cast<long long>(std::ceil(center - half_width)));
        const long long m1 = std::min<long long>(static_cast<long long>(n_in) - 1,
                                                 static_cast<long long>(std::floor(center + half_width)));
        double acc = 0.0;
        for (long long m = m0; m <= m1; ++m) {
            const double u = center - static_cast<double>(m);
            acc += x[m] * rho * sinc(rho * u) * blackman(u / half_width);
        }
        out.samples[k] = acc;
    }
    return out;
}

std::size_t stft_frame_count(std::size_t n_samples, std::size_t window, std::size_t hop) {
    if (n_samples < window) return 0;
    return (n_samples - window + hop - 1) / hop + 1;
}

SpectralFrameSeries stft_magnitude(const AudioClip& clip, const StftConfig& config) {
    if (clip.sample_rate != config.sample_rate) {
        throw usage_error("clip sample rate does not match STFT config");
    }
    const std::size_t window = config.window_samples();
    const std::size_t hop = config.hop_samples();
    if (window < hop) throw usage_error("STFT window smaller than hop");

    const std::size_t n = clip.samples.size();
    if (n < window) throw pipeline_error("input too short for one STFT window");

    const std::size_t frames = stft_frame_count(n, window, hop);
    const std::size_t bins = window / 2 + 1;

    std::vector<double> hann(window);
    for (std::size_t i = 0; i < window; ++i) {
        hann[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / window));
    }

    SpectralFrameSeries out;
    out.magnitudes = Mat(frames, bins);
    out.frame_times.resize(frames);
    out.bin_freqs.resize(bins);
    out.sample_rate = config.sample_rate;
    out.hop_samples = hop;
    out.window_samples = window;
    for (std::size_t b = 0; b < bins; ++b) {
        out.bin_freqs[b] = static_cast<double>(b) * config.sample_rate / static_cast<double>(window);
    }

    detail::RealFft fft(window);
    std::vector<double> frame(window);
    std::vector<std::complex<double>> spectrum(bins);

    for (std::size_t f = 0; f < frames; ++f) {
        const std::size_t start = f * hop;
        const std::size_t avail = std::min(window, n - start);
        for (std::size_t i = 0; i < avail; ++i) frame[i] = clip.samples[start + i] * hann[i];
        std::fill(frame.begin() + avail, frame.end(), 0.0);
        fft.forward(frame.data(), spectrum.data());
        double* row = out.magnitudes.row_ptr(f);
        for (std::size_t b = 0; b < bins; ++b) row[b] = std::abs(spectrum[b]);
        out.frame_times[f] = (static_cast<double>(start) + window / 2.0) / config.sample_rate;
    }
    return out;
}

} // namespace downbeat
