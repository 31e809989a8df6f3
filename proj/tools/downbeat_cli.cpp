// Command-line front end. Everything goes through the shared library's C
// interface; configuration is assembled as key=value text (config file
// first, then flag overrides).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "downbeat.h"

namespace {

int fail(downbeat_status status) {
    std::cerr << "downbeat: error: " << downbeat_last_error() << "\n";
    return static_cast<int>(status);
}

int fail_usage(const std::string& message) {
    std::cerr << "downbeat: error: " << message << "\n";
    return static_cast<int>(DOWNBEAT_ERR_USAGE);
}

// Flags land on top of the config file so the command line wins.
struct ConfigBuilder {
    std::string text;

    bool load_file(const std::string& path, std::string* error) {
        std::ifstream in(path);
        if (!in) {
            *error = "cannot open config file: " + path;
            return false;
        }
        std::stringstream buf;
        buf << in.rdbuf();
        text += buf.str();
        text += "\n";
        return true;
    }
    void set(const std::string& key, const std::string& value) {
        text += key + "=" + value + "\n";
    }
    void set_if(const bool changed, const std::string& key, const std::string& value) {
        if (changed) set(key, value);
    }
};

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

bool write_lines(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return true;
    }
    std::ofstream out(path);
    if (!out) return false;
    out << content;
    return static_cast<bool>(out);
}

struct CommonOpts {
    std::string config_file;
    std::vector<std::string> overrides; // raw key=value pairs
    std::string seed, jobs;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "Config file (key=value lines)");
        cmd->add_option("--set", overrides, "Extra key=value override")->type_name("KEY=VALUE");
        cmd->add_option("--seed", seed, "Random seed");
        cmd->add_option("-j,--jobs", jobs, "Worker thread count");
    }
    bool apply(ConfigBuilder& cfg, std::string* error) const {
        if (!config_file.empty() && !cfg.load_file(config_file, error)) return false;
        if (!seed.empty()) cfg.set("seed", seed);
        if (!jobs.empty()) cfg.set("jobs", jobs);
        for (const std::string& kv : overrides) {
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos) {
                *error = "--set expects KEY=VALUE, got '" + kv + "'";
                return false;
            }
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return true;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"downbeat tracking for music audio"};
    app.require_subcommand(1);

    // --- track ---
    auto* track = app.add_subcommand("track", "Estimate downbeat times for a WAV file");
    std::string track_audio, track_model, track_out, track_emit, track_mode, track_threshold;
    std::string track_states, track_networks, track_tatum_source;
    CommonOpts track_common;
    track->add_option("audio", track_audio, "Input WAV file")->required();
    track->add_option("-m,--model", track_model, "Model bundle directory")->required();
    track->add_option("-o,--out", track_out, "Output file (default: stdout)");
    track->add_option("--emit", track_emit, "Extra output: 'likelihoods' emits JSON");
    track->add_option("--mode", track_mode, "Decoder: hmm or threshold");
    track->add_option("--t,--threshold", track_threshold, "Threshold for threshold mode");
    track->add_option("--states", track_states, "Comma-separated bar lengths (tatums)");
    track->add_option("--networks", track_networks, "Comma-separated feature subset");
    track->add_option("--tatum-source", track_tatum_source, "plp | annotated2 | snap");
    track_common.add_to(track);

    // --- features ---
    auto* features = app.add_subcommand("features", "Dump one feature matrix as CSV");
    std::string feat_audio, feat_kind, feat_out;
    features->add_option("audio", feat_audio, "Input WAV file")->required();
    features->add_option("-k,--kind", feat_kind, "chroma | lfs | odf | mcqt")->required();
    features->add_option("-o,--out", feat_out, "Output CSV path")->required();

    // --- tatums ---
    auto* tatums = app.add_subcommand("tatums", "Print tatum times (one per line)");
    std::string tat_audio, tat_out, tat_plp;
    CommonOpts tat_common;
    tatums->add_option("audio", tat_audio, "Input WAV file")->required();
    tatums->add_option("-o,--out", tat_out, "Output file (default: stdout)");
    tatums->add_option("--plp", tat_plp, "Also write the pulse curve as CSV");
    tat_common.add_to(tatums);

    // --- train ---
    auto* train = app.add_subcommand("train", "Train a model bundle on dataset directories");
    std::vector<std::string> train_dirs;
    std::string train_out, train_holdout, train_preset, train_epochs;
    CommonOpts train_common;
    train->add_option("datasets", train_dirs, "Dataset directories")->required();
    train->add_option("-o,--out", train_out, "Output bundle directory")->required();
    train->add_option("--holdout", train_holdout, "Dataset name to exclude");
    train->add_option("--preset", train_preset, "reduced | full");
    train->add_option("--epochs", train_epochs, "Training epochs");
    train_common.add_to(train);

    // --- eval ---
    auto* eval = app.add_subcommand("eval", "Score a bundle on annotated datasets");
    std::vector<std::string> eval_dirs;
    std::string eval_model, eval_out, eval_holdout, eval_mode, eval_threshold;
    std::string eval_states, eval_networks, eval_tatum_source, eval_preset, eval_epochs;
    bool eval_lodo = false;
    CommonOpts eval_common;
    eval->add_option("datasets", eval_dirs, "Dataset directories")->required();
    eval->add_option("-m,--model", eval_model, "Model bundle directory");
    eval->add_option("-o,--out", eval_out, "Report directory")->required();
    eval->add_option("--holdout", eval_holdout, "Evaluate only this dataset");
    eval->add_option("--mode", eval_mode, "hmm, threshold, or hmm,threshold");
    eval->add_option("--t,--threshold", eval_threshold, "Threshold for threshold mode");
    eval->add_option("--states", eval_states, "Comma-separated bar lengths (tatums)");
    eval->add_option("--networks", eval_networks, "Comma-separated feature subset");
    eval->add_option("--tatum-source", eval_tatum_source, "plp | annotated2 | snap");
    eval->add_flag("--lodo", eval_lodo, "Leave-one-dataset-out: train+eval per holdout");
    eval->add_option("--preset", eval_preset, "reduced | full (lodo training)");
    eval->add_option("--epochs", eval_epochs, "Training epochs (lodo training)");
    eval_common.add_to(eval);

    // --- synth ---
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
    std::string synth_out, synth_n, synth_duple, synth_tmin, synth_tmax, synth_dur, synth_prefix;
    CommonOpts synth_common;
    synth->add_option("-o,--out", synth_out, "Output dataset directory")->required();
    synth->add_option("-n,--n", synth_n, "Number of songs");
    synth->add_option("--duple", synth_duple, "Fraction of 4-beat bars (rest are 3)");
    synth->add_option("--tempo-min", synth_tmin, "Minimum tempo (BPM)");
    synth->add_option("--tempo-max", synth_tmax, "Maximum tempo (BPM)");
    synth->add_option("--duration", synth_dur, "Song duration (seconds)");
    synth->add_option("--prefix", synth_prefix, "Stem prefix");
    synth_common.add_to(synth);

    CLI11_PARSE(app, argc, argv);

    if (track->parsed()) {
        ConfigBuilder cfg;
        std::string err;
        if (!track_common.apply(cfg, &err)) return fail_usage(err);
        cfg.set_if(!track_mode.empty(), "mode", track_mode);
        cfg.set_if(!track_threshold.empty(), "threshold", track_threshold);
        cfg.set_if(!track_states.empty(), "state_lengths", track_states);
        cfg.set_if(!track_networks.empty(), "networks", track_networks);
        cfg.set_if(!track_tatum_source.empty(), "tatum_source", track_tatum_source);
        cfg.set_if(!track_emit.empty(), "emit", track_emit);

        downbeat_model* model = nullptr;
        downbeat_status st = downbeat_model_open(track_model.c_str(), &model);
        if (st != DOWNBEAT_OK) return fail(st);
        downbeat_result* result = nullptr;
        st = downbeat_track(model, track_audio.c_str(), cfg.text.c_str(), &result);
        downbeat_model_close(model);
        if (st != DOWNBEAT_OK) return fail(st);

        std::string content;
        if (track_emit == "likelihoods") {
            nlohmann::json j;
            const double* tt = downbeat_result_tatum_times(result);
            j["tatum_times"] =
                std::vector<double>(tt, tt + downbeat_result_tatum_count(result));
            const double* db = downbeat_result_downbeat_times(result);
            j["downbeat_times"] =
                std::vector<double>(db, db + downbeat_result_downbeat_count(result));
            nlohmann::json series = nlohmann::json::object();
            for (const char* source : {"chroma", "lfs", "odf", "mcqt", "fused"}) {
                size_t len = 0;
                const double* values = downbeat_result_likelihood(result, source, &len);
                if (values) series[source] = std::vector<double>(values, values + len);
            }
            j["likelihoods"] = series;
            content = j.dump(2) + "\n";
        } else {
            const double* db = downbeat_result_downbeat_times(result);
            for (size_t i = 0; i < downbeat_result_downbeat_count(result); ++i) {
                content += fmt6(db[i]) + "\n";
            }
        }
        const bool ok = write_lines(track_out, content);
        downbeat_result_free(result);
        if (!ok) return fail_usage("cannot write output file: " + track_out);
        return 0;
    }

    if (features->parsed()) {
        const downbeat_status st =
            downbeat_features_csv(feat_audio.c_str(), feat_kind.c_str(), feat_out.c_str());
        return st == DOWNBEAT_OK ? 0 : fail(st);
    }

    if (tatums->parsed()) {
        ConfigBuilder cfg;
        std::string err;
        if (!tat_common.apply(cfg, &err)) return fail_usage(err);
        downbeat_result* result = nullptr;
        const downbeat_status st =
            downbeat_analyze_tatums(tat_audio.c_str(), cfg.text.c_str(), &result);
        if (st != DOWNBEAT_OK) return fail(st);
        if (downbeat_result_used_fallback(result)) {
            std::cerr << "downbeat: warning: segmentation failed, using a uniform 250 ms grid\n";
        }
        std::string content;
        const double* tt = downbeat_result_tatum_times(result);
        for (size_t i = 0; i < downbeat_result_tatum_count(result); ++i) {
            content += fmt6(tt[i]) + "\n";
        }
        bool ok = write_lines(tat_out, content);
        if (ok && !tat_plp.empty()) {
            size_t n = 0, nt = 0;
            const double* plp = downbeat_result_pulse(result, &n);
            const double* times = downbeat_result_pulse_times(result, &nt);
            std::string csv = "time,pulse\n";
            for (size_t i = 0; i < n && i < nt; ++i) {
                csv += fmt6(times[i]) + "," + fmt6(plp[i]) + "\n";
            }
            ok = write_lines(tat_plp, csv);
        }
        downbeat_result_free(result);
        if (!ok) return fail_usage("cannot write output");
        return 0;
    }

    if (train->parsed()) {
        ConfigBuilder cfg;
        std::string err;
        if (!train_common.apply(cfg, &err)) return fail_usage(err);
        cfg.set_if(!train_holdout.empty(), "holdout", train_holdout);
        cfg.set_if(!train_preset.empty(), "preset", train_preset);
        cfg.set_if(!train_epochs.empty(), "epochs", train_epochs);
        std::vector<const char*> dirs;
        for (const std::string& d : train_dirs) dirs.push_back(d.c_str());
        const downbeat_status st =
            downbeat_train(dirs.data(), dirs.size(), cfg.text.c_str(), train_out.c_str());
        return st == DOWNBEAT_OK ? 0 : fail(st);
    }

    if (eval->parsed()) {
        ConfigBuilder cfg;
        std::string err;
        if (!eval_common.apply(cfg, &err)) return fail_usage(err);
        cfg.set_if(!eval_holdout.empty(), "holdout", eval_holdout);
        cfg.set_if(!eval_mode.empty(), "mode", eval_mode);
        cfg.set_if(!eval_threshold.empty(), "threshold", eval_threshold);
        cfg.set_if(!eval_states.empty(), "state_lengths", eval_states);
        cfg.set_if(!eval_networks.empty(), "networks", eval_networks);
        cfg.set_if(!eval_tatum_source.empty(), "tatum_source", eval_tatum_source);
        cfg.set_if(!eval_preset.empty(), "preset", eval_preset);
        cfg.set_if(!eval_epochs.empty(), "epochs", eval_epochs);
        cfg.set_if(eval_lodo, "lodo", "1");
        if (eval_model.empty() && !eval_lodo) {
            return fail_usage("--model is required unless --lodo is given");
        }
        std::vector<const char*> dirs;
        for (const std::string& d : eval_dirs) dirs.push_back(d.c_str());
        const downbeat_status st =
            downbeat_evaluate(eval_model.empty() ? nullptr : eval_model.c_str(), dirs.data(),
                              dirs.size(), cfg.text.c_str(), eval_out.c_str());
        return st == DOWNBEAT_OK ? 0 : fail(st);
    }

    if (synth->parsed()) {
        ConfigBuilder cfg;
        std::string err;
        if (!synth_common.apply(cfg, &err)) return fail_usage(err);
        cfg.set_if(!synth_n.empty(), "n_songs", synth_n);
        cfg.set_if(!synth_duple.empty(), "duple_fraction", synth_duple);
        cfg.set_if(!synth_tmin.empty(), "tempo_min", synth_tmin);
        cfg.set_if(!synth_tmax.empty(), "tempo_max", synth_tmax);
        cfg.set_if(!synth_dur.empty(), "duration", synth_dur);
        cfg.set_if(!synth_prefix.empty(), "prefix", synth_prefix);
        const downbeat_status st = downbeat_synth(synth_out.c_str(), cfg.text.c_str());
        return st == DOWNBEAT_OK ? 0 : fail(st);
    }

    return 0;
}
