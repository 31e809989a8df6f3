#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "downbeat/ensemble.h"
#include "downbeat/eval.h"
#include "downbeat/synth.h"

namespace downbeat {

// Flat key=value configuration shared by the C API and the CLI. Later
// assignments override earlier ones, so a config file can be extended by
// command-line overrides.
struct PipelineConfig {
    std::uint64_t seed = 0;
    int jobs = 1;

    // tracking / evaluation
    std::vector<std::string> modes = {"hmm"}; // subset of {"hmm", "threshold"}
    double threshold = 0.88;
    std::vector<int> state_lengths;        // empty = bundled state space
    double end_bar_boost = 1.0;
    std::vector<FeatureKind> networks;     // empty = all bundled networks
    std::string tatum_source = "plp";      // plp | annotated2 | snap
    std::string emit;                      // "" | "likelihoods"

    // training
    bool reduced = true;
    std::size_t epochs = 12;
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t batch = 64;
    std::map<std::string, std::size_t> epochs_per_kind; // keyed by feature name
    std::string holdout;
    bool lodo = false;

    // synthesis
    std::size_t n_songs = 10;
    double duple_fraction = 0.7;
    double tempo_min = 80.0;
    double tempo_max = 160.0;
    double duration = 30.0;
    std::string prefix = "synth";

    void apply(const std::string& key, const std::string& value);
    void validate() const;
    // Sorted key=value serialization; the fingerprint input.
    std::string canonical_text() const;

    static PipelineConfig from_text(const std::string& text);
    static PipelineConfig from_file(const std::string& path);
};

std::uint64_t fnv1a64(const std::string& text);

struct TrackResult {
    std::vector<double> downbeat_times;
    TatumGrid grid;
    // one series per network plus "fused"
    std::map<std::string, std::vector<double>> likelihoods;
    bool used_fallback_grid = false;
};

// One audio/annotation pair of a dataset directory.
struct DatasetSong {
    std::string stem;
    std::string dataset;
    std::string wav_path;
    std::string beats_path; // may be empty when annotations are not required
};

// <stem>.wav + <stem>.beats pairs of a directory; unmatched stems are
// reported to `warnings` (one line each) and skipped.
std::vector<DatasetSong> scan_dataset_dir(const std::string& dir, bool require_annotations,
                                          std::vector<std::string>* warnings = nullptr);

FeatureMatrix feature_for_clip(const AudioClip& clip, FeatureKind kind);

// ODF -> tempogram -> periodicity path -> PLP -> peak picking. Falls back to
// a uniform 250 ms grid (flagging used_fallback) when segmentation fails.
TatumGrid analyze_tatums(const AudioClip& clip, bool* used_fallback = nullptr);

void write_feature_csv(const FeatureMatrix& feat, const std::string& path);

// Full tracking chain for one clip. `annotations` is only consulted for the
// annotated2/snap tatum sources.
TrackResult track_clip(const EnsembleModel& model, const AudioClip& clip,
                       const PipelineConfig& config, const AnnotationSet* annotations = nullptr);
TrackResult track_file(const EnsembleModel& model, const std::string& wav_path,
                       const PipelineConfig& config);

// Trains the four networks and the transition statistics on every dataset
// directory except the configured holdout. Writes loss curves to
// <bundle_dir>/training_log.csv when bundle_dir is nonempty.
EnsembleModel train_model(const std::vector<std::string>& dataset_dirs,
                          const PipelineConfig& config, const std::string& bundle_dir,
                          std::ostream* log = nullptr);

struct EvalOutcome {
    // mode -> aggregate over all evaluated songs
    std::map<std::string, ScoreReport> overall;
    // dataset -> mode -> report
    std::map<std::string, std::map<std::string, ScoreReport>> per_dataset;
};

// Evaluates a model on dataset directories (restricted to the configured
// holdout if set); one inference pass per song feeds every requested mode.
// Writes per-song and summary CSVs plus report.json under report_dir when
// nonempty.
EvalOutcome evaluate_model(const EnsembleModel& model, const std::vector<std::string>& dataset_dirs,
                           const PipelineConfig& config, const std::string& report_dir,
                           std::ostream* log = nullptr);

// Leave-one-dataset-out orchestration: per directory, trains on the others
// and evaluates on it. Bundles and reports land under out_dir.
EvalOutcome run_dataset_eval(const std::vector<std::string>& dataset_dirs,
                             const PipelineConfig& config, const std::string& out_dir,
                             std::ostream* log = nullptr);

} // namespace downbeat
