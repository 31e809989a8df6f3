#include "downbeat.h"

#include <cstring>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "downbeat/audio.h"
#include "downbeat/ensemble.h"
#include "downbeat/error.h"
#include "downbeat/pipeline.h"
#include "downbeat/synth.h"

using namespace downbeat;

struct downbeat_model {
    EnsembleModel model;
};

struct downbeat_result {
    std::vector<double> downbeats;
    TatumGrid grid;
    std::map<std::string, std::vector<double>> likelihoods;
    bool used_fallback = false;
};

namespace {

thread_local std::string g_last_error;

downbeat_status to_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::Usage: return DOWNBEAT_ERR_USAGE;
        case ErrorCode::Missing: return DOWNBEAT_ERR_MISSING;
        case ErrorCode::Pipeline: return DOWNBEAT_ERR_PIPELINE;
    }
    return DOWNBEAT_ERR_PIPELINE;
}

template <typename Fn>
downbeat_status guarded(Fn&& fn) {
    try {
        fn();
        return DOWNBEAT_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return DOWNBEAT_ERR_PIPELINE;
    } catch (...) {
        g_last_error = "unknown failure";
        return DOWNBEAT_ERR_PIPELINE;
    }
}

PipelineConfig config_from(const char* config_text) {
    return config_text ? PipelineConfig::from_text(config_text) : PipelineConfig{};
}

downbeat_status require(bool ok, const char* message) {
    if (ok) return DOWNBEAT_OK;
    g_last_error = message;
    return DOWNBEAT_ERR_USAGE;
}

} // namespace

extern "C" {

const char* downbeat_version(void) { return "0.1.0"; }

const char* downbeat_last_error(void) { return g_last_error.c_str(); }

downbeat_status downbeat_model_open(const char* bundle_dir, downbeat_model** out_model) {
    if (auto st = require(bundle_dir && out_model, "bundle_dir and out_model are required")) return st;
    *out_model = nullptr;
    return guarded([&] {
        auto handle = std::make_unique<downbeat_model>();
        handle->model = load_bundle(bundle_dir);
        *out_model = handle.release();
    });
}

void downbeat_model_close(downbeat_model* model) { delete model; }

downbeat_status downbeat_track(const downbeat_model* model, const char* wav_path,
                               const char* config_text, downbeat_result** out_result) {
    if (auto st = require(model && wav_path && out_result, "model, wav_path and out_result are required")) {
        return st;
    }
    *out_result = nullptr;
    return guarded([&] {
        const PipelineConfig cfg = config_from(config_text);
        TrackResult tracked = track_file(model->model, wav_path, cfg);
        auto result = std::make_unique<downbeat_result>();
        result->downbeats = std::move(tracked.downbeat_times);
        result->grid = std::move(tracked.grid);
        result->likelihoods = std::move(tracked.likelihoods);
        result->used_fallback = tracked.used_fallback_grid;
        *out_result = result.release();
    });
}

downbeat_status downbeat_analyze_tatums(const char* wav_path, const char* config_text,
                                        downbeat_result** out_result) {
    if (auto st = require(wav_path && out_result, "wav_path and out_result are required")) return st;
    *out_result = nullptr;
    return guarded([&] {
        const PipelineConfig cfg = config_from(config_text);
        cfg.validate();
        auto result = std::make_unique<downbeat_result>();
        const AudioClip clip = load_audio(wav_path);
        result->grid = analyze_tatums(clip, &result->used_fallback);
        *out_result = result.release();
    });
}

size_t downbeat_result_downbeat_count(const downbeat_result* result) {
    return result ? result->downbeats.size() : 0;
}

const double* downbeat_result_downbeat_times(const downbeat_result* result) {
    return result ? result->downbeats.data() : nullptr;
}

size_t downbeat_result_tatum_count(const downbeat_result* result) {
    return result ? result->grid.tatum_times.size() : 0;
}

const double* downbeat_result_tatum_times(const downbeat_result* result) {
    return result ? result->grid.tatum_times.data() : nullptr;
}

const double* downbeat_result_likelihood(const downbeat_result* result, const char* source,
                                         size_t* out_len) {
    if (out_len) *out_len = 0;
    if (!result || !source) return nullptr;
    const auto it = result->likelihoods.find(source);
    if (it == result->likelihoods.end()) return nullptr;
    if (out_len) *out_len = it->second.size();
    return it->second.data();
}

const double* downbeat_result_pulse(const downbeat_result* result, size_t* out_len) {
    if (out_len) *out_len = 0;
    if (!result) return nullptr;
    if (out_len) *out_len = result->grid.plp.size();
    return result->grid.plp.data();
}

const double* downbeat_result_pulse_times(const downbeat_result* result, size_t* out_len) {
    if (out_len) *out_len = 0;
    if (!result) return nullptr;
    if (out_len) *out_len = result->grid.plp_times.size();
    return result->grid.plp_times.data();
}

int downbeat_result_used_fallback(const downbeat_result* result) {
    return result && result->used_fallback ? 1 : 0;
}

void downbeat_result_free(downbeat_result* result) { delete result; }

downbeat_status downbeat_features_csv(const char* wav_path, const char* kind,
                                      const char* out_csv_path) {
    if (auto st = require(wav_path && kind && out_csv_path,
                          "wav_path, kind and out_csv_path are required")) {
        return st;
    }
    return guarded([&] {
        const FeatureKind k = feature_kind_from_string(kind);
        const AudioClip clip = load_audio(wav_path);
        write_feature_csv(feature_for_clip(clip, k), out_csv_path);
    });
}

downbeat_status downbeat_train(const char* const* dataset_dirs, size_t n_dirs,
                               const char* config_text, const char* out_bundle_dir) {
    if (auto st = require(dataset_dirs && n_dirs > 0 && out_bundle_dir,
                          "dataset directories and out_bundle_dir are required")) {
        return st;
    }
    return guarded([&] {
        const PipelineConfig cfg = config_from(config_text);
        std::vector<std::string> dirs(dataset_dirs, dataset_dirs + n_dirs);
        train_model(dirs, cfg, out_bundle_dir, nullptr);
    });
}

downbeat_status downbeat_evaluate(const char* bundle_dir, const char* const* dataset_dirs,
                                  size_t n_dirs, const char* config_text,
                                  const char* out_report_dir) {
    if (auto st = require(dataset_dirs && n_dirs > 0 && out_report_dir,
                          "dataset directories and out_report_dir are required")) {
        return st;
    }
    return guarded([&] {
        const PipelineConfig cfg = config_from(config_text);
        std::vector<std::string> dirs(dataset_dirs, dataset_dirs + n_dirs);
        if (cfg.lodo) {
            run_dataset_eval(dirs, cfg, out_report_dir, nullptr);
            return;
        }
        if (!bundle_dir) throw usage_error("bundle_dir is required unless lodo=1");
        const EnsembleModel model = load_bundle(bundle_dir);
        evaluate_model(model, dirs, cfg, out_report_dir, nullptr);
    });
}

downbeat_status downbeat_synth(const char* out_dir, const char* config_text) {
    if (auto st = require(out_dir != nullptr, "out_dir is required")) return st;
    return guarded([&] {
        const PipelineConfig cfg = config_from(config_text);
        CorpusParams params;
        params.n_songs = cfg.n_songs;
        params.duple_fraction = cfg.duple_fraction;
        params.tempo_min = cfg.tempo_min;
        params.tempo_max = cfg.tempo_max;
        params.duration = cfg.duration;
        params.seed = cfg.seed;
        params.prefix = cfg.prefix;
        generate_corpus(out_dir, params);
    });
}

} // extern "C"
