#include "downbeat/synth.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "downbeat/error.h"
#include "downbeat/rng.h"

namespace downbeat {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSynthRate = 44100.0;

void add_tone(std::vector<double>& buf, double sr, double start, double dur, double freq,
              double amp, double attack = 0.01, double release = 0.05) {
    const auto s0 = static_cast<std::size_t>(std::llround(start * sr));
    const auto n = static_cast<std::size_t>(std::llround(dur * sr));
    for (std::size_t i = 0; i < n && s0 + i < buf.size(); ++i) {
        const double t = static_cast<double>(i) / sr;
        double env = 1.0;
        if (t < attack) env = t / attack;
        const double tail = dur - t;
        if (tail < release) env = std::min(env, tail / release);
        buf[s0 + i] += amp * env * std::sin(2.0 * kPi * freq * t);
    }
}

// Low-frequency burst with a falling pitch, placed sample-exactly at `start`.
void add_kick(std::vector<double>& buf, double sr, double start, double amp) {
    const auto s0 = static_cast<std::size_t>(std::llround(start * sr));
    const double dur = 0.15;
    const auto n = static_cast<std::size_t>(std::llround(dur * sr));
    double phase = 0.0;
    for (std::size_t i = 0; i < n && s0 + i < buf.size(); ++i) {
        const double t = static_cast<double>(i) / sr;
        const double freq = 50.0 + 60.0 * std::exp(-t * 40.0);
        phase += 2.0 * kPi * freq / sr;
        buf[s0 + i] += amp * std::exp(-t * 18.0) * std::sin(phase);
    }
}

void add_noise_burst(std::vector<double>& buf, double sr, double start, double amp, Rng& rng) {
    const auto s0 = static_cast<std::size_t>(std::llround(start * sr));
    const double dur = 0.05;
    const auto n = static_cast<std::size_t>(std::llround(dur * sr));
    double lp = 0.0;
    for (std::size_t i = 0; i < n && s0 + i < buf.size(); ++i) {
        const double t = static_cast<double>(i) / sr;
        const double white = rng.uniform(-1.0, 1.0);
        lp = 0.6 * lp + 0.4 * white; // soften the top end a little
        buf[s0 + i] += amp * std::exp(-t * 60.0) * lp;
    }
}

double midi_to_hz(double midi) { return 440.0 * std::pow(2.0, (midi - 69.0) / 12.0); }

} // namespace

SynthSong generate_song(const SongRecipe& recipe) {
    if (recipe.tempo_bpm < 60.0 || recipe.tempo_bpm > 200.0) {
        throw usage_error("tempo must be within [60, 200] BPM");
    }
    if (recipe.meter != 2 && recipe.meter != 3 && recipe.meter != 4) {
        throw usage_error("meter must be 2, 3 or 4 beats per bar");
    }
    if (recipe.duration < 20.0) throw usage_error("song duration must be at least 20 s");
    if (recipe.tatums_per_beat < 1) throw usage_error("tatums per beat must be positive");
    if (recipe.chord_change_bars < 1) throw usage_error("chord change period must be positive");

    const double sr = kSynthRate;
    Rng rng(recipe.seed);
    Rng noise_rng = rng.split();

    const double beat_period = 60.0 / recipe.tempo_bpm;
    const double tatum_period = beat_period / recipe.tatums_per_beat;
    const int tatums_per_bar = recipe.meter * recipe.tatums_per_beat;

    std::vector<double> accents = recipe.accent_pattern;
    if (accents.empty()) {
        accents.resize(tatums_per_bar);
        for (int i = 0; i < tatums_per_bar; ++i) {
            if (i == 0) accents[i] = 0.55;
            else if (i % recipe.tatums_per_beat == 0) accents[i] = 0.4;
            else accents[i] = 0.18;
        }
    }

    SynthSong song;
    song.audio.sample_rate = sr;
    song.audio.samples.assign(static_cast<std::size_t>(std::llround(recipe.duration * sr)), 0.0);
    std::vector<double>& buf = song.audio.samples;

    // Beat grid with sample-exact annotation times.
    std::vector<double> beat_times;
    const double tail_margin = 0.6;
    for (std::size_t k = 0;; ++k) {
        double t = static_cast<double>(k) * beat_period;
        if (recipe.timing_jitter > 0.0 && k > 0) {
            t += rng.uniform(-recipe.timing_jitter, recipe.timing_jitter) * beat_period;
        }
        if (t >= recipe.duration - tail_margin) break;
        t = std::llround(t * sr) / sr;
        beat_times.push_back(t);
    }
    if (beat_times.size() < static_cast<std::size_t>(2 * recipe.meter)) {
        throw usage_error("recipe yields fewer than two bars");
    }

    for (std::size_t k = 0; k < beat_times.size(); ++k) {
        const int pos = static_cast<int>(k % recipe.meter) + 1;
        song.annotations.beat_times.push_back(beat_times[k]);
        if (pos == 1) song.annotations.downbeat_times.push_back(beat_times[k]);
    }

    // Percussion: kick on downbeats, noise bursts per tatum accent.
    for (std::size_t k = 0; k < beat_times.size(); ++k) {
        const bool is_downbeat = (k % recipe.meter) == 0;
        if (is_downbeat) add_kick(buf, sr, beat_times[k], 0.85);
        for (int sub = 0; sub < recipe.tatums_per_beat; ++sub) {
            const double t = beat_times[k] + sub * tatum_period;
            const int tatum_in_bar =
                static_cast<int>(k % recipe.meter) * recipe.tatums_per_beat + sub;
            const double gain = accents[tatum_in_bar % accents.size()];
            if (gain > 0.0) add_noise_burst(buf, sr, t, gain, noise_rng);
        }
    }

    // Sustained triad changing every chord_change_bars bars on the downbeat,
    // so the harmonic content moves exactly at bar boundaries.
    const double bar_period = beat_period * recipe.meter;
    const int change_every = recipe.chord_change_bars;
    double root_midi = 48.0 + std::floor(rng.uniform(0.0, 12.0)); // C3..B3
    const std::size_t n_bars = beat_times.size() / recipe.meter;
    for (std::size_t bar = 0; bar < n_bars; bar += change_every) {
        const std::size_t beat_idx = bar * recipe.meter;
        if (beat_idx >= beat_times.size()) break;
        const double start = beat_times[beat_idx];
        const double dur = std::min(bar_period * change_every, recipe.duration - start - 0.05);
        const int step = static_cast<int>(std::floor(rng.uniform(0.0, 5.0))) - 2; // -2..2 semitones
        root_midi = std::clamp(root_midi + step, 45.0, 57.0);
        const double third = rng.uniform() < 0.5 ? 3.0 : 4.0; // minor or major
        add_tone(buf, sr, start, dur, midi_to_hz(root_midi), 0.10, 0.02, 0.08);
        add_tone(buf, sr, start, dur, midi_to_hz(root_midi + third), 0.08, 0.02, 0.08);
        add_tone(buf, sr, start, dur, midi_to_hz(root_midi + 7.0), 0.08, 0.02, 0.08);
    }

    // Melody: one tone per beat inside the melodic constant-Q range, longer
    // and louder on downbeats.
    static const int kScale[5] = {0, 2, 4, 7, 9};
    int degree = static_cast<int>(std::floor(rng.uniform(0.0, 5.0)));
    for (std::size_t k = 0; k < beat_times.size(); ++k) {
        const bool is_downbeat = (k % recipe.meter) == 0;
        degree += static_cast<int>(std::floor(rng.uniform(0.0, 3.0))) - 1;
        degree = std::clamp(degree, 0, 9);
        const double midi = 69.0 + kScale[degree % 5] + 12.0 * (degree / 5); // A4 upward
        const double amp = is_downbeat ? 0.16 : 0.10;
        const double dur = (is_downbeat ? 0.9 : 0.6) * beat_period;
        add_tone(buf, sr, beat_times[k], dur, midi_to_hz(midi), amp);
    }

    double peak = 0.0;
    for (double v : buf) peak = std::max(peak, std::abs(v));
    if (peak > 0.95) {
        const double scale = 0.95 / peak;
        for (double& v : buf) v *= scale;
    }
    return song;
}

std::vector<std::string> generate_corpus(const std::string& dir, const CorpusParams& params) {
    namespace fs = std::filesystem;
    if (params.n_songs < 1) throw usage_error("corpus needs at least one song");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw pipeline_error("cannot create dataset directory: " + dir);

    Rng rng(params.seed);
    std::vector<std::string> stems;
    nlohmann::json manifest;
    manifest["seed"] = params.seed;
    manifest["songs"] = nlohmann::json::array();

    for (std::size_t i = 0; i < params.n_songs; ++i) {
        SongRecipe recipe;
        recipe.seed = rng.next_u64();
        recipe.tempo_bpm = rng.uniform(params.tempo_min, params.tempo_max);
        recipe.meter = rng.uniform() < params.duple_fraction ? 4 : 3;
        recipe.duration = params.duration;
        recipe.chord_change_bars = rng.uniform() < 0.6 ? 1 : 2;

        char stem[64];
        std::snprintf(stem, sizeof(stem), "%s_%03zu", params.prefix.c_str(), i);
        const SynthSong song = generate_song(recipe);

        save_wav((fs::path(dir) / (std::string(stem) + ".wav")).string(), song.audio);
        std::ofstream beats(fs::path(dir) / (std::string(stem) + ".beats"));
        if (!beats) throw pipeline_error("cannot write annotations for " + std::string(stem));
        for (std::size_t k = 0; k < song.annotations.beat_times.size(); ++k) {
            const int pos = static_cast<int>(k % static_cast<std::size_t>(recipe.meter)) + 1;
            char line[64];
            std::snprintf(line, sizeof(line), "%.6f %d\n", song.annotations.beat_times[k], pos);
            beats << line;
        }

        manifest["songs"].push_back({{"stem", stem},
                                     {"tempo_bpm", recipe.tempo_bpm},
                                     {"meter", recipe.meter},
                                     {"duration", recipe.duration},
                                     {"seed", recipe.seed}});
        stems.emplace_back(stem);
    }
    manifest["stems"] = stems;

    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw pipeline_error("cannot write corpus manifest in " + dir);
    mf << manifest.dump(2) << "\n";
    return stems;
}

} // namespace downbeat
