#include "downbeat/pipeline.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "downbeat/error.h"

namespace downbeat {

namespace {

namespace fs = std::filesystem;

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : text) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    return parts;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw usage_error("config key '" + key + "' needs a number, got '" + value + "'");
    }
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw usage_error("config key '" + key + "' needs an integer, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "no") return false;
    throw usage_error("config key '" + key + "' needs a boolean, got '" + value + "'");
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::string fmt(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

const std::vector<FeatureKind>& all_kinds() {
    static const std::vector<FeatureKind> kinds = {FeatureKind::Chroma, FeatureKind::Lfs,
                                                   FeatureKind::Odf, FeatureKind::Mcqt};
    return kinds;
}

std::size_t nearest_tatum(const std::vector<double>& times, double t) {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.end()) return times.size() - 1;
    if (it == times.begin()) return 0;
    const std::size_t hi = static_cast<std::size_t>(it - times.begin());
    return (t - times[hi - 1] <= times[hi] - t) ? hi - 1 : hi;
}

// Everything the trainer and evaluator need from one song.
struct PreparedSong {
    std::string stem;
    std::string dataset;
    double duration = 0.0;
    AnnotationSet ann;
    TatumGrid grid;
    bool fallback_grid = false;
    std::vector<char> downbeat_flags;
    std::vector<int> bar_spans;
    std::map<FeatureKind, SyncFeature> sync;
    std::map<std::string, std::vector<double>> likelihoods; // filled at eval time
};

TatumGrid grid_for_source(const std::string& source, const FeatureMatrix& odf,
                          const AnnotationSet* ann, double duration, bool* used_fallback) {
    if (used_fallback) *used_fallback = false;
    if (source == "annotated2") {
        if (!ann || ann->beat_times.size() < 2) {
            throw pipeline_error("tatum source 'annotated2' needs annotated beats");
        }
        return substitute_annotated_grid(TatumGrid{}, ann->beat_times, 2);
    }
    TatumGrid grid;
    try {
        const Tempogram tg = compute_tempogram(odf);
        const PeriodicityPath path = best_path_dp(tg);
        const std::vector<double> plp = build_plp(tg, path);
        grid = pick_tatums(plp, tg.frame_times);
    } catch (const Error&) {
        if (used_fallback) *used_fallback = true;
        grid = make_uniform_grid(duration);
    }
    if (source == "snap") {
        if (!ann) throw pipeline_error("tatum source 'snap' needs annotated downbeats");
        grid = snap_downbeats(grid, ann->downbeat_times);
    } else if (source != "plp") {
        throw usage_error("unknown tatum source: " + source);
    }
    return grid;
}

PreparedSong prepare_song(const DatasetSong& song, const PipelineConfig& cfg,
                          const std::vector<FeatureKind>& kinds) {
    PreparedSong out;
    out.stem = song.stem;
    out.dataset = song.dataset;

    const AudioClip clip = load_audio(song.wav_path);
    out.duration = clip.duration();
    if (!song.beats_path.empty()) {
        out.ann = parse_annotations(song.beats_path);
        out.ann.source = song.dataset;
    }

    const FeatureMatrix odf = feature_for_clip(clip, FeatureKind::Odf);
    out.grid = grid_for_source(cfg.tatum_source, odf,
                               song.beats_path.empty() ? nullptr : &out.ann, out.duration,
                               &out.fallback_grid);
    if (out.grid.tatum_times.size() < 2) throw pipeline_error("too few tatums in " + song.stem);

    for (FeatureKind kind : kinds) {
        const FeatureMatrix feat =
            kind == FeatureKind::Odf ? odf : feature_for_clip(clip, kind);
        out.sync.emplace(kind, quantize_to_grid(feat, out.grid));
    }

    const std::size_t tatums = out.grid.tatum_times.size();
    out.downbeat_flags.assign(tatums, 0);
    std::vector<std::size_t> downbeat_idx;
    for (double d : out.ann.downbeat_times) {
        const std::size_t idx = nearest_tatum(out.grid.tatum_times, d);
        out.downbeat_flags[idx] = 1;
        if (downbeat_idx.empty() || idx > downbeat_idx.back()) downbeat_idx.push_back(idx);
    }
    for (std::size_t k = 1; k < downbeat_idx.size(); ++k) {
        const int span = static_cast<int>(downbeat_idx[k] - downbeat_idx[k - 1]);
        if (span >= 1) out.bar_spans.push_back(span);
    }
    return out;
}

std::vector<NetworkInput> windows_for(const PreparedSong& song, FeatureKind kind) {
    std::vector<NetworkInput> windows =
        make_inputs(song.sync.at(kind), window_tatums_for(kind));
    label_windows(windows, song.downbeat_flags, multi_label_for(kind));
    return windows;
}

std::size_t epochs_for(const PipelineConfig& cfg, FeatureKind kind) {
    const auto it = cfg.epochs_per_kind.find(to_string(kind));
    return it != cfg.epochs_per_kind.end() ? it->second : cfg.epochs;
}

std::string status_name(FeatureKind kind) { return to_string(kind); }

nlohmann::json report_json(const ScoreReport& report) {
    nlohmann::json j;
    j["songs"] = report.songs.size();
    j["mean_precision"] = report.mean_precision;
    j["mean_recall"] = report.mean_recall;
    j["mean_f"] = report.mean_f;
    j["f_stddev"] = report.f_stddev;
    return j;
}

void merge_outcome(EvalOutcome& into, const EvalOutcome& from) {
    for (const auto& [mode, report] : from.overall) {
        auto& songs = into.overall[mode].songs;
        songs.insert(songs.end(), report.songs.begin(), report.songs.end());
    }
    for (const auto& [dataset, by_mode] : from.per_dataset) {
        for (const auto& [mode, report] : by_mode) into.per_dataset[dataset][mode] = report;
    }
}

void finalize_overall(EvalOutcome& outcome) {
    for (auto& [mode, report] : outcome.overall) report = summarize_scores(std::move(report.songs));
}

} // namespace

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

void PipelineConfig::apply(const std::string& key, const std::string& value) {
    if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "jobs") jobs = static_cast<int>(parse_int(key, value));
    else if (key == "mode") {
        modes.clear();
        for (const std::string& m : split(value, ',')) {
            if (!m.empty()) modes.push_back(m);
        }
    } else if (key == "threshold") threshold = parse_double(key, value);
    else if (key == "state_lengths") {
        state_lengths.clear();
        if (!value.empty()) {
            for (const std::string& part : split(value, ',')) {
                state_lengths.push_back(static_cast<int>(parse_int(key, part)));
            }
        }
    } else if (key == "end_bar_boost") end_bar_boost = parse_double(key, value);
    else if (key == "networks") {
        networks.clear();
        if (!value.empty()) {
            for (const std::string& part : split(value, ',')) {
                networks.push_back(feature_kind_from_string(part));
            }
        }
    } else if (key == "tatum_source") tatum_source = value;
    else if (key == "emit") emit = value;
    else if (key == "preset") {
        if (value == "reduced") reduced = true;
        else if (value == "full") reduced = false;
        else throw usage_error("preset must be 'reduced' or 'full'");
    } else if (key == "epochs") epochs = static_cast<std::size_t>(parse_int(key, value));
    else if (key.rfind("epochs_", 0) == 0) {
        const std::string kind = key.substr(7);
        feature_kind_from_string(kind); // validates
        epochs_per_kind[kind] = static_cast<std::size_t>(parse_int(key, value));
    } else if (key == "lr") lr = parse_double(key, value);
    else if (key == "momentum") momentum = parse_double(key, value);
    else if (key == "batch") batch = static_cast<std::size_t>(parse_int(key, value));
    else if (key == "holdout") holdout = value;
    else if (key == "lodo") lodo = parse_bool(key, value);
    else if (key == "n_songs") n_songs = static_cast<std::size_t>(parse_int(key, value));
    else if (key == "duple_fraction") duple_fraction = parse_double(key, value);
    else if (key == "tempo_min") tempo_min = parse_double(key, value);
    else if (key == "tempo_max") tempo_max = parse_double(key, value);
    else if (key == "duration") duration = parse_double(key, value);
    else if (key == "prefix") prefix = value;
    else throw usage_error("unknown config key: " + key);
}

void PipelineConfig::validate() const {
    if (modes.empty()) throw usage_error("at least one mode is required");
    bool has_hmm = false;
    for (const std::string& m : modes) {
        if (m == "hmm") has_hmm = true;
        else if (m != "threshold") throw usage_error("unknown mode: " + m);
    }
    if (!state_lengths.empty() && !has_hmm) {
        throw usage_error("state-space selection requires the hmm mode");
    }
    if (threshold < 0.0 || threshold > 1.0) throw usage_error("threshold must be in [0,1]");
    if (tatum_source != "plp" && tatum_source != "annotated2" && tatum_source != "snap") {
        throw usage_error("unknown tatum source: " + tatum_source);
    }
    if (!emit.empty() && emit != "likelihoods") throw usage_error("unknown emit option: " + emit);
    if (jobs < 1) throw usage_error("jobs must be at least 1");
    if (momentum < 0.0 || momentum >= 1.0) throw usage_error("momentum must be in [0,1)");
    if (lr < 0.0) throw usage_error("learning rate must be nonnegative");
    if (batch < 1) throw usage_error("batch size must be at least 1");
    if (duple_fraction < 0.0 || duple_fraction > 1.0) {
        throw usage_error("duple_fraction must be in [0,1]");
    }
}

std::string PipelineConfig::canonical_text() const {
    std::ostringstream out;
    out << "batch=" << batch << "\n";
    out << "duple_fraction=" << duple_fraction << "\n";
    out << "duration=" << duration << "\n";
    out << "emit=" << emit << "\n";
    out << "end_bar_boost=" << end_bar_boost << "\n";
    out << "epochs=" << epochs << "\n";
    for (const auto& [kind, e] : epochs_per_kind) out << "epochs_" << kind << "=" << e << "\n";
    out << "holdout=" << holdout << "\n";
    out << "jobs=" << jobs << "\n";
    out << "lodo=" << (lodo ? 1 : 0) << "\n";
    out << "lr=" << lr << "\n";
    std::string mode_list;
    for (const std::string& m : modes) mode_list += (mode_list.empty() ? "" : ",") + m;
    out << "mode=" << mode_list << "\n";
    out << "momentum=" << momentum << "\n";
    out << "n_songs=" << n_songs << "\n";
    std::string net_list;
    for (FeatureKind k : networks) net_list += (net_list.empty() ? "" : ",") + std::string(to_string(k));
    out << "networks=" << net_list << "\n";
    out << "prefix=" << prefix << "\n";
    out << "preset=" << (reduced ? "reduced" : "full") << "\n";
    out << "seed=" << seed << "\n";
    std::string len_list;
    for (int l : state_lengths) len_list += (len_list.empty() ? "" : ",") + std::to_string(l);
    out << "state_lengths=" << len_list << "\n";
    out << "tatum_source=" << tatum_source << "\n";
    out << "tempo_max=" << tempo_max << "\n";
    out << "tempo_min=" << tempo_min << "\n";
    out << "threshold=" << threshold << "\n";
    return out.str();
}

PipelineConfig PipelineConfig::from_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw usage_error("config line " + std::to_string(line_no) + " is not key=value");
        }
        cfg.apply(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    return cfg;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw missing_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

std::vector<DatasetSong> scan_dataset_dir(const std::string& dir, bool require_annotations,
                                          std::vector<std::string>* warnings) {
    if (!fs::is_directory(dir)) throw missing_error("dataset directory not found: " + dir);
    const std::string dataset = fs::path(dir).filename().string();

    std::set<std::string> wavs, beats;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path p = entry.path();
        if (p.extension() == ".wav") wavs.insert(p.stem().string());
        else if (p.extension() == ".beats") beats.insert(p.stem().string());
    }

    std::vector<DatasetSong> songs;
    for (const std::string& stem : wavs) {
        const bool annotated = beats.count(stem) > 0;
        if (require_annotations && !annotated) {
            if (warnings) warnings->push_back(dir + ": no annotations for stem '" + stem + "', skipped");
            continue;
        }
        DatasetSong song;
        song.stem = stem;
        song.dataset = dataset;
        song.wav_path = (fs::path(dir) / (stem + ".wav")).string();
        if (annotated) song.beats_path = (fs::path(dir) / (stem + ".beats")).string();
        songs.push_back(std::move(song));
    }
    if (warnings) {
        for (const std::string& stem : beats) {
            if (!wavs.count(stem)) {
                warnings->push_back(dir + ": no audio for stem '" + stem + "', skipped");
            }
        }
    }
    std::sort(songs.begin(), songs.end(),
              [](const DatasetSong& a, const DatasetSong& b) { return a.stem < b.stem; });
    return songs;
}

FeatureMatrix feature_for_clip(const AudioClip& clip, FeatureKind kind) {
    const StftConfig config = stft_config_for(kind);
    const AudioClip resampled = resample(clip, config.sample_rate);
    return compute_feature(kind, stft_magnitude(resampled, config));
}

TatumGrid analyze_tatums(const AudioClip& clip, bool* used_fallback) {
    const FeatureMatrix odf = feature_for_clip(clip, FeatureKind::Odf);
    return grid_for_source("plp", odf, nullptr, clip.duration(), used_fallback);
}

void write_feature_csv(const FeatureMatrix& feat, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw pipeline_error("cannot write feature CSV: " + path);
    out << "time";
    for (std::size_t b = 0; b < feat.bins(); ++b) out << ",bin_" << b;
    out << "\n";
    for (std::size_t t = 0; t < feat.frames(); ++t) {
        out << fmt(feat.frame_times[t], 6);
        const double* row = feat.values.row_ptr(t);
        for (std::size_t b = 0; b < feat.bins(); ++b) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6g", row[b]);
            out << "," << buf;
        }
        out << "\n";
    }
}

namespace {

struct Decoded {
    std::map<std::string, std::vector<double>> downbeats_by_mode;
};

// Shared decode step: one fused likelihood series feeds every mode.
Decoded decode_modes(const EnsembleModel& model, const PipelineConfig& cfg,
                     const std::vector<double>& fused, const TatumGrid& grid) {
    Decoded out;
    for (const std::string& mode : cfg.modes) {
        std::vector<double> times;
        if (mode == "threshold") {
            for (std::size_t idx : threshold_baseline(fused, cfg.threshold)) {
                times.push_back(grid.tatum_times[idx]);
            }
        } else {
            const BarStateSpace* space = &model.space;
            const TransitionMatrix* transitions = &model.transitions;
            BarStateSpace custom_space;
            TransitionMatrix custom_transitions;
            if (!cfg.state_lengths.empty()) {
                custom_space = build_state_space(cfg.state_lengths);
                std::vector<std::vector<std::size_t>> seqs;
                for (const std::vector<int>& spans : model.bar_spans) {
                    seqs.push_back(bars_to_state_sequence(custom_space, spans));
                }
                custom_transitions =
                    train_transitions(custom_space, seqs, 0.02, cfg.end_bar_boost);
                space = &custom_space;
                transitions = &custom_transitions;
            }
            const Mat emissions = emissions_from_likelihood(*space, fused);
            const DecodedPath path = viterbi(*space, *transitions, emissions);
            times = states_to_downbeats(path, grid);
        }
        out.downbeats_by_mode[mode] = std::move(times);
    }
    return out;
}

std::vector<FeatureKind> kinds_for_run(const EnsembleModel& model, const PipelineConfig& cfg) {
    std::vector<FeatureKind> kinds;
    if (cfg.networks.empty()) {
        for (const auto& [kind, net] : model.networks) kinds.push_back(kind);
    } else {
        kinds = cfg.networks;
        for (FeatureKind k : kinds) {
            if (!model.networks.count(k)) {
                throw usage_error(std::string("bundle has no network for feature '") +
                                  to_string(k) + "'");
            }
        }
    }
    if (kinds.empty()) throw usage_error("no networks selected");
    return kinds;
}

std::map<std::string, std::vector<double>> run_inference(const EnsembleModel& model,
                                                         const PipelineConfig& cfg,
                                                         const PreparedSong& song,
                                                         const std::vector<FeatureKind>& kinds) {
    std::map<std::string, std::vector<double>> out;
    std::vector<LikelihoodSeries> series;
    for (FeatureKind kind : kinds) {
        const Network& net = model.networks.at(kind);
        const std::size_t wt = net.spec().input_n / 5;
        std::vector<NetworkInput> windows = make_inputs(song.sync.at(kind), wt);
        series.push_back(infer_likelihood(net, windows, kind));
        out[series.back().source] = series.back().values;
    }
    out["fused"] = fuse_average(series).values;
    return out;
}

} // namespace

TrackResult track_clip(const EnsembleModel& model, const AudioClip& clip,
                       const PipelineConfig& config, const AnnotationSet* annotations) {
    config.validate();
    if (config.tatum_source != "plp" && !annotations) {
        throw usage_error("tatum source '" + config.tatum_source + "' needs annotations");
    }
    const std::vector<FeatureKind> kinds = kinds_for_run(model, config);

    PreparedSong song;
    song.duration = clip.duration();
    if (annotations) song.ann = *annotations;

    const FeatureMatrix odf = feature_for_clip(clip, FeatureKind::Odf);
    song.grid = grid_for_source(config.tatum_source, odf, annotations, song.duration,
                                &song.fallback_grid);
    if (song.grid.tatum_times.size() < 2) throw pipeline_error("too few tatums detected");

    for (FeatureKind kind : kinds) {
        const FeatureMatrix feat = kind == FeatureKind::Odf ? odf : feature_for_clip(clip, kind);
        song.sync.emplace(kind, quantize_to_grid(feat, song.grid));
    }

    TrackResult result;
    result.grid = song.grid;
    result.used_fallback_grid = song.fallback_grid;
    result.likelihoods = run_inference(model, config, song, kinds);

    const Decoded decoded = decode_modes(model, config, result.likelihoods.at("fused"), song.grid);
    result.downbeat_times = decoded.downbeats_by_mode.at(config.modes.front());
    return result;
}

TrackResult track_file(const EnsembleModel& model, const std::string& wav_path,
                       const PipelineConfig& config) {
    return track_clip(model, load_audio(wav_path), config, nullptr);
}

EnsembleModel train_model(const std::vector<std::string>& dataset_dirs,
                          const PipelineConfig& config, const std::string& bundle_dir,
                          std::ostream* log) {
    config.validate();
    std::vector<std::string> warnings;
    std::vector<DatasetSong> songs;
    for (const std::string& dir : dataset_dirs) {
        if (!config.holdout.empty() && fs::path(dir).filename().string() == config.holdout) {
            continue;
        }
        const auto scanned = scan_dataset_dir(dir, true, &warnings);
        songs.insert(songs.end(), scanned.begin(), scanned.end());
    }
    if (songs.empty()) throw usage_error("no training songs found");
    if (log) {
        for (const std::string& w : warnings) *log << "warning: " << w << "\n";
    }

    std::vector<PreparedSong> prepared(songs.size());
    parallel_for(songs.size(), config.jobs, [&](std::size_t i) {
        prepared[i] = prepare_song(songs[i], config, all_kinds());
    });
    if (log) {
        for (const PreparedSong& p : prepared) {
            if (p.fallback_grid) {
                *log << "warning: segmentation fell back to a uniform grid for " << p.stem << "\n";
            }
        }
    }

    // Seed layout is fixed: one draw for balancing, then one per network in
    // feature order, so subset changes cannot silently reshuffle training.
    Rng master(config.seed);
    const std::uint64_t balance_seed = master.next_u64();
    std::map<FeatureKind, std::uint64_t> net_seeds;
    for (FeatureKind kind : all_kinds()) net_seeds[kind] = master.next_u64();

    // Multi-label sets take every window; scalar sets are class balanced.
    std::vector<NetworkInput> odf_set, lfs_set, chroma_set;
    std::vector<char> mcqt_labels;
    std::vector<std::pair<std::size_t, std::size_t>> mcqt_slots; // (song, tatum)
    for (std::size_t s = 0; s < prepared.size(); ++s) {
        auto odf_w = windows_for(prepared[s], FeatureKind::Odf);
        odf_set.insert(odf_set.end(), std::make_move_iterator(odf_w.begin()),
                       std::make_move_iterator(odf_w.end()));
        auto lfs_w = windows_for(prepared[s], FeatureKind::Lfs);
        lfs_set.insert(lfs_set.end(), std::make_move_iterator(lfs_w.begin()),
                       std::make_move_iterator(lfs_w.end()));
        auto chroma_w = windows_for(prepared[s], FeatureKind::Chroma);
        chroma_set.insert(chroma_set.end(), std::make_move_iterator(chroma_w.begin()),
                          std::make_move_iterator(chroma_w.end()));
        for (std::size_t t = 0; t < prepared[s].downbeat_flags.size(); ++t) {
            mcqt_labels.push_back(prepared[s].downbeat_flags[t]);
            mcqt_slots.emplace_back(s, t);
        }
    }

    Rng balance_rng(balance_seed);
    chroma_set = augment_chroma_shifts(balance_classes(chroma_set, balance_rng));

    const std::vector<std::size_t> mcqt_selected = balanced_label_indices(mcqt_labels, balance_rng);
    std::vector<NetworkInput> mcqt_set;
    mcqt_set.reserve(mcqt_selected.size());
    {
        std::size_t cursor = 0;
        for (std::size_t s = 0; s < prepared.size() && cursor < mcqt_selected.size(); ++s) {
            std::vector<NetworkInput> all;
            bool built = false;
            while (cursor < mcqt_selected.size() && mcqt_slots[mcqt_selected[cursor]].first == s) {
                if (!built) {
                    all = windows_for(prepared[s], FeatureKind::Mcqt);
                    built = true;
                }
                mcqt_set.push_back(std::move(all[mcqt_slots[mcqt_selected[cursor]].second]));
                ++cursor;
            }
        }
    }

    EnsembleModel model;
    const std::map<FeatureKind, const std::vector<NetworkInput>*> sets = {
        {FeatureKind::Chroma, &chroma_set},
        {FeatureKind::Lfs, &lfs_set},
        {FeatureKind::Odf, &odf_set},
        {FeatureKind::Mcqt, &mcqt_set},
    };
    std::vector<std::pair<FeatureKind, std::vector<double>>> curves;
    for (FeatureKind kind : all_kinds()) {
        const NetworkSpec spec = default_spec(kind, config.reduced);
        TrainConfig tc;
        tc.lr = config.lr;
        tc.momentum = config.momentum;
        tc.batch = config.batch;
        tc.epochs = epochs_for(config, kind);
        tc.seed = net_seeds[kind];
        if (log) {
            *log << "training " << status_name(kind) << " network on " << sets.at(kind)->size()
                 << " windows, " << tc.epochs << " epochs\n";
        }
        TrainResult result = train_network(spec, *sets.at(kind), tc);
        if (result.diverged) {
            throw pipeline_error(std::string("training diverged for the ") + to_string(kind) +
                                 " network after " + std::to_string(result.epoch_loss.size()) +
                                 " epochs");
        }
        curves.emplace_back(kind, result.epoch_loss);
        model.networks.emplace(kind, Network(spec, std::move(result.params)));
    }

    model.space = build_state_space(default_bar_lengths());
    std::vector<std::vector<std::size_t>> sequences;
    for (const PreparedSong& p : prepared) {
        model.bar_spans.push_back(p.bar_spans);
        sequences.push_back(bars_to_state_sequence(model.space, p.bar_spans));
    }
    model.transitions = train_transitions(model.space, sequences, 0.02, config.end_bar_boost);

    std::string data_id;
    for (const DatasetSong& s : songs) {
        data_id += s.dataset + "/" + s.stem + ":" + std::to_string(fs::file_size(s.wav_path)) + ";";
    }
    char fp[32];
    std::snprintf(fp, sizeof(fp), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(data_id)));
    model.meta["data_fingerprint"] = fp;
    std::snprintf(fp, sizeof(fp), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config.canonical_text())));
    model.meta["config_fingerprint"] = fp;
    model.meta["seed"] = std::to_string(config.seed);
    model.meta["preset"] = config.reduced ? "reduced" : "full";
    model.meta["songs"] = std::to_string(songs.size());
    model.meta["holdout"] = config.holdout;

    if (!bundle_dir.empty()) {
        save_bundle(bundle_dir, model);
        std::ofstream loss_csv(fs::path(bundle_dir) / "training_log.csv");
        loss_csv << "network,epoch,loss\n";
        for (const auto& [kind, curve] : curves) {
            for (std::size_t e = 0; e < curve.size(); ++e) {
                loss_csv << to_string(kind) << "," << e << "," << fmt(curve[e], 6) << "\n";
            }
        }
    }
    return model;
}

EvalOutcome evaluate_model(const EnsembleModel& model, const std::vector<std::string>& dataset_dirs,
                           const PipelineConfig& config, const std::string& report_dir,
                           std::ostream* log) {
    config.validate();
    std::vector<std::string> warnings;
    std::vector<DatasetSong> songs;
    bool holdout_found = config.holdout.empty();
    for (const std::string& dir : dataset_dirs) {
        if (!config.holdout.empty() && fs::path(dir).filename().string() != config.holdout) {
            continue;
        }
        holdout_found = true;
        const auto scanned = scan_dataset_dir(dir, true, &warnings);
        songs.insert(songs.end(), scanned.begin(), scanned.end());
    }
    if (!holdout_found) throw usage_error("holdout dataset not found: " + config.holdout);
    if (songs.empty()) throw usage_error("no songs to evaluate");
    if (log) {
        for (const std::string& w : warnings) *log << "warning: " << w << "\n";
    }

    const std::vector<FeatureKind> kinds = kinds_for_run(model, config);

    struct SongOutcome {
        std::string dataset, stem;
        std::map<std::string, FMeasure> by_mode;
    };
    std::vector<SongOutcome> outcomes(songs.size());
    parallel_for(songs.size(), config.jobs, [&](std::size_t i) {
        PreparedSong prep = prepare_song(songs[i], config, kinds);
        const auto likelihoods = run_inference(model, config, prep, kinds);
        const Decoded decoded = decode_modes(model, config, likelihoods.at("fused"), prep.grid);
        SongOutcome& out = outcomes[i];
        out.dataset = prep.dataset;
        out.stem = prep.stem;
        for (const auto& [mode, est] : decoded.downbeats_by_mode) {
            out.by_mode[mode] = f_measure(est, prep.ann.downbeat_times, prep.duration);
        }
    });

    EvalOutcome result;
    std::map<std::string, std::map<std::string, std::vector<SongScore>>> per_dataset_songs;
    for (const SongOutcome& out : outcomes) {
        for (const auto& [mode, score] : out.by_mode) {
            result.overall[mode].songs.push_back({out.dataset + "/" + out.stem, score});
            per_dataset_songs[out.dataset][mode].push_back({out.stem, score});
        }
    }
    finalize_overall(result);
    for (auto& [dataset, by_mode] : per_dataset_songs) {
        for (auto& [mode, list] : by_mode) {
            result.per_dataset[dataset][mode] = summarize_scores(std::move(list));
        }
    }

    if (!report_dir.empty()) {
        std::error_code ec;
        fs::create_directories(report_dir, ec);
        if (ec) throw pipeline_error("cannot create report directory: " + report_dir);
        for (const auto& [mode, report] : result.overall) {
            std::ofstream csv(fs::path(report_dir) / ("songs_" + mode + ".csv"));
            csv << "song,precision,recall,f\n";
            for (const SongScore& s : report.songs) {
                csv << s.stem << "," << fmt(s.score.precision, 4) << "," << fmt(s.score.recall, 4)
                    << "," << fmt(s.score.f, 4) << "\n";
            }
        }
        std::ofstream summary(fs::path(report_dir) / "summary.csv");
        summary << "dataset,mode,songs,mean_precision,mean_recall,mean_f,f_stddev\n";
        for (const auto& [dataset, by_mode] : result.per_dataset) {
            for (const auto& [mode, report] : by_mode) {
                summary << dataset << "," << mode << "," << report.songs.size() << ","
                        << fmt(report.mean_precision, 4) << "," << fmt(report.mean_recall, 4) << ","
                        << fmt(report.mean_f, 4) << "," << fmt(report.f_stddev, 4) << "\n";
            }
        }
        for (const auto& [mode, report] : result.overall) {
            summary << "all," << mode << "," << report.songs.size() << ","
                    << fmt(report.mean_precision, 4) << "," << fmt(report.mean_recall, 4) << ","
                    << fmt(report.mean_f, 4) << "," << fmt(report.f_stddev, 4) << "\n";
        }

        nlohmann::json j;
        j["config"] = config.canonical_text();
        char fp[32];
        std::snprintf(fp, sizeof(fp), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(config.canonical_text())));
        j["config_fingerprint"] = fp;
        j["model_meta"] = model.meta;
        for (const auto& [mode, report] : result.overall) j["overall"][mode] = report_json(report);
        for (const auto& [dataset, by_mode] : result.per_dataset) {
            for (const auto& [mode, report] : by_mode) {
                j["datasets"][dataset][mode] = report_json(report);
            }
        }
        std::ofstream jf(fs::path(report_dir) / "report.json");
        jf << j.dump(2) << "\n";
    }
    return result;
}

EvalOutcome run_dataset_eval(const std::vector<std::string>& dataset_dirs,
                             const PipelineConfig& config, const std::string& out_dir,
                             std::ostream* log) {
    if (dataset_dirs.size() < 2) {
        throw usage_error("leave-one-dataset-out needs at least two dataset directories");
    }
    EvalOutcome combined;
    for (const std::string& dir : dataset_dirs) {
        const std::string name = fs::path(dir).filename().string();
        if (log) *log << "=== holdout " << name << " ===\n";
        PipelineConfig round = config;
        round.holdout = name;
        const std::string bundle_dir =
            out_dir.empty() ? "" : (fs::path(out_dir) / ("bundle_" + name)).string();
        const EnsembleModel model = train_model(dataset_dirs, round, bundle_dir, log);
        const std::string report_dir =
            out_dir.empty() ? "" : (fs::path(out_dir) / ("holdout_" + name)).string();
        merge_outcome(combined, evaluate_model(model, dataset_dirs, round, report_dir, log));
    }
    finalize_overall(combined);
    return combined;
}

} // namespace downbeat
