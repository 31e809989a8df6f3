#include "downbeat/ensemble.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "downbeat/error.h"

namespace downbeat {

namespace {

constexpr double kDropoutRate = 0.5;

NetworkSpec make_spec(FeatureKind kind, std::size_t f0, std::size_t f1, std::size_t f2) {
    NetworkSpec spec;
    spec.input_l = 1;
    switch (kind) {
        case FeatureKind::Mcqt: // melodic network
            spec.input_n = 85;
            spec.input_m = 304;
            spec.loss = LossKind::Log;
            spec.layers = {
                {46, 96, 1, f0, {PostOpSpec::relu(), PostOpSpec::maxpool(2, 209)}},
                {6, 1, f0, f1, {PostOpSpec::relu(), PostOpSpec::maxpool(3, 1)}},
                {5, 1, f1, f2, {PostOpSpec::relu(), PostOpSpec::dropout(kDropoutRate)}},
                {1, 1, f2, 2, {PostOpSpec::softmax()}},
            };
            break;
        case FeatureKind::Odf: // rhythmic network
            spec.input_n = 85;
            spec.input_m = 3;
            spec.loss = LossKind::Euclidean;
            spec.layers = {
                {40, 3, 1, f0, {PostOpSpec::relu(), PostOpSpec::maxpool(2, 1)}},
                {6, 1, f0, f1, {PostOpSpec::relu(), PostOpSpec::maxpool(3, 1)}},
                {6, 1, f1, f2, {PostOpSpec::relu(), PostOpSpec::dropout(kDropoutRate)}},
                {1, 1, f2, 17, {PostOpSpec::sigmoid()}},
            };
            break;
        case FeatureKind::Chroma: // harmonic network
            spec.input_n = 45;
            spec.input_m = 12;
            spec.loss = LossKind::Log;
            spec.layers = {
                {6, 3, 1, f0, {PostOpSpec::relu(), PostOpSpec::maxpool(2, 2)}},
                {6, 3, f0, f1, {PostOpSpec::relu(), PostOpSpec::maxpool(3, 3)}},
                {5, 1, f1, f2, {PostOpSpec::relu(), PostOpSpec::dropout(kDropoutRate)}},
                {1, 1, f2, 2, {PostOpSpec::softmax()}},
            };
            break;
        case FeatureKind::Lfs: // bass content network
            spec.input_n = 85;
            spec.input_m = 10;
            spec.loss = LossKind::Euclidean;
            spec.layers = {
                {6, 3, 1, f0, {PostOpSpec::relu(), PostOpSpec::maxpool(2, 2)}},
                {8, 4, f0, f1, {PostOpSpec::relu(), PostOpSpec::maxpool(3, 1)}},
                {11, 1, f1, f2, {PostOpSpec::relu(), PostOpSpec::dropout(kDropoutRate)}},
                {1, 1, f2, 17, {PostOpSpec::sigmoid()}},
            };
            break;
    }
    spec.validate();
    return spec;
}

void write_doubles_le(std::ofstream& out, const double* values, std::size_t count) {
    out.write(reinterpret_cast<const char*>(values), static_cast<std::streamsize>(count * 8));
}

void read_doubles_le(std::ifstream& in, double* values, std::size_t count) {
    in.read(reinterpret_cast<char*>(values), static_cast<std::streamsize>(count * 8));
}

} // namespace

NetworkSpec default_spec(FeatureKind kind, bool reduced) {
    return reduced ? make_spec(kind, 3, 6, 80) : make_spec(kind, 30, 60, 800);
}

std::size_t window_tatums_for(FeatureKind kind) {
    return kind == FeatureKind::Chroma ? 9 : 17;
}

bool multi_label_for(FeatureKind kind) {
    return kind == FeatureKind::Odf || kind == FeatureKind::Lfs;
}

std::vector<double> target_for(const NetworkSpec& spec, const std::vector<double>& label) {
    if (spec.loss == LossKind::Log) {
        if (label.size() != 1) throw usage_error("scalar-head network needs a scalar label");
        return label[0] > 0.5 ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
    }
    if (label.size() != spec.output_shape().l) {
        throw usage_error("multi-label size does not match the network output");
    }
    return label;
}

Tensor3 window_to_tensor(const Mat& window) {
    Tensor3 t(window.rows, window.cols, 1);
    t.values = window.data;
    return t;
}

std::vector<NetworkInput> augment_chroma_shifts(const std::vector<NetworkInput>& inputs) {
    std::vector<NetworkInput> out;
    out.reserve(inputs.size() * 12);
    for (const NetworkInput& in : inputs) {
        if (in.window.cols != 12) throw usage_error("chroma augmentation expects 12-bin windows");
        for (std::size_t shift = 0; shift < 12; ++shift) {
            NetworkInput shifted = in;
            for (std::size_t r = 0; r < in.window.rows; ++r) {
                const double* src = in.window.row_ptr(r);
                double* dst = shifted.window.row_ptr(r);
                for (std::size_t c = 0; c < 12; ++c) dst[c] = src[(c + shift) % 12];
            }
            out.push_back(std::move(shifted));
        }
    }
    return out;
}

std::vector<std::size_t> balanced_label_indices(const std::vector<char>& labels, Rng& rng) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty()) throw pipeline_error("cannot balance: a class is empty");

    std::vector<std::size_t>& majority = pos.size() > neg.size() ? pos : neg;
    const std::size_t keep = std::min(pos.size(), neg.size());
    rng.shuffle(majority);
    majority.resize(keep);

    std::vector<std::size_t> selected;
    selected.reserve(2 * keep);
    selected.insert(selected.end(), pos.begin(), pos.end());
    selected.insert(selected.end(), neg.begin(), neg.end());
    std::sort(selected.begin(), selected.end());
    return selected;
}

std::vector<NetworkInput> balance_classes(const std::vector<NetworkInput>& inputs, Rng& rng) {
    std::vector<char> labels;
    labels.reserve(inputs.size());
    for (const NetworkInput& in : inputs) {
        if (in.label.size() != 1) throw usage_error("class balancing expects scalar labels");
        labels.push_back(in.label[0] > 0.5 ? 1 : 0);
    }
    std::vector<NetworkInput> out;
    for (std::size_t i : balanced_label_indices(labels, rng)) out.push_back(inputs[i]);
    return out;
}

TrainResult train_network(const NetworkSpec& spec, const std::vector<NetworkInput>& data,
                          const TrainConfig& config) {
    if (data.empty()) throw usage_error("training set is empty");
    spec.validate();

    Rng rng(config.seed);
    Network net(spec, init_parameters(spec, rng));
    Parameters velocity;
    Gradients grads = zero_gradients(spec);

    std::vector<Tensor3> tensors;
    std::vector<std::vector<double>> targets;
    tensors.reserve(data.size());
    targets.reserve(data.size());
    for (const NetworkInput& in : data) {
        tensors.push_back(window_to_tensor(in.window));
        targets.push_back(target_for(spec, in.label));
    }

    TrainResult result;
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch) {
            const std::size_t b1 = std::min(order.size(), b0 + config.batch);
            for (Gradients& g = grads; auto& layer : g.layers) {
                std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
                std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
            }
            double batch_loss = 0.0;
            for (std::size_t i = b0; i < b1; ++i) {
                batch_loss +=
                    net.accumulate_gradients(tensors[order[i]], targets[order[i]], grads, rng);
            }
            const double inv = 1.0 / static_cast<double>(b1 - b0);
            batch_loss *= inv;
            if (!std::isfinite(batch_loss)) {
                result.diverged = true;
                result.params = net.params();
                return result;
            }
            for (auto& layer : grads.layers) {
                for (double& w : layer.weights) w *= inv;
                for (double& b : layer.bias) b *= inv;
            }
            if (config.lr > 0.0) {
                sgd_step(net.params(), velocity, grads, config.lr, config.momentum);
            }
            epoch_loss += batch_loss * static_cast<double>(b1 - b0);
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    result.params = net.params();
    return result;
}

LikelihoodSeries infer_likelihood(const Network& net, const std::vector<NetworkInput>& windows,
                                  FeatureKind source) {
    LikelihoodSeries series;
    series.source = to_string(source);
    const std::size_t tatums = windows.size();
    series.values.assign(tatums, 0.0);

    const std::size_t out_dim = net.spec().output_shape().l;
    if (out_dim == 2) {
        for (std::size_t i = 0; i < tatums; ++i) {
            const std::vector<double> out = net.infer(window_to_tensor(windows[i].window));
            series.values[windows[i].center_tatum] = std::clamp(out[0], 0.0, 1.0);
        }
    } else {
        std::vector<double> sums(tatums, 0.0);
        std::vector<std::size_t> counts(tatums, 0);
        for (const NetworkInput& w : windows) {
            const std::vector<double> out = net.infer(window_to_tensor(w.window));
            for (std::size_t j = 0; j < w.window_tatums; ++j) {
                const long long t = w.start_tatum + static_cast<long long>(j);
                if (t < 0 || t >= static_cast<long long>(tatums)) continue;
                sums[static_cast<std::size_t>(t)] += out[j];
                counts[static_cast<std::size_t>(t)] += 1;
            }
        }
        for (std::size_t t = 0; t < tatums; ++t) {
            if (counts[t] == 0) throw pipeline_error("a tatum received no likelihood window");
            series.values[t] = std::clamp(sums[t] / static_cast<double>(counts[t]), 0.0, 1.0);
        }
    }
    return series;
}

LikelihoodSeries fuse_average(const std::vector<LikelihoodSeries>& series) {
    if (series.empty()) throw usage_error("nothing to fuse");
    for (std::size_t i = 1; i < series.size(); ++i) {
        if (series[i].values.size() != series[0].values.size()) {
            throw usage_error("likelihood series lengths differ");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (series[i].source == series[j].source) {
                throw usage_error("duplicate likelihood source: " + series[i].source);
            }
        }
    }
    LikelihoodSeries fused;
    fused.source = "fused";
    fused.values.assign(series[0].values.size(), 0.0);
    for (const LikelihoodSeries& s : series) {
        for (std::size_t i = 0; i < s.values.size(); ++i) fused.values[i] += s.values[i];
    }
    for (double& v : fused.values) v /= static_cast<double>(series.size());
    return fused;
}

void save_bundle(const std::string& dir, const EnsembleModel& model) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw pipeline_error("cannot create bundle directory: " + dir);

    nlohmann::json manifest;
    manifest["format_version"] = 1;
    nlohmann::json nets = nlohmann::json::object();
    for (const auto& [kind, net] : model.networks) {
        const std::string base = to_string(kind);
        save_network((fs::path(dir) / (base + ".net")).string(), net.spec(), net.params(),
                     {{"kind", base}});
        nets[base] = base + ".net";
    }
    manifest["networks"] = nets;
    manifest["transitions"] = "transitions.net";
    manifest["bar_spans"] = model.bar_spans;
    manifest["meta"] = model.meta;

    // Transition matrix: same manifest-plus-blob convention as the networks.
    {
        std::ofstream tman(fs::path(dir) / "transitions.net");
        if (!tman) throw pipeline_error("cannot write transitions manifest in " + dir);
        tman << "format_version 1\n";
        tman << "state_lengths";
        for (int len : model.space.lengths) tman << " " << len;
        tman << "\n";
        tman << "blob transitions.bin\n";
        std::ofstream tblob(fs::path(dir) / "transitions.bin", std::ios::binary);
        if (!tblob) throw pipeline_error("cannot write transitions blob in " + dir);
        write_doubles_le(tblob, model.transitions.a.data.data(), model.transitions.a.data.size());
    }

    std::ofstream mf(fs::path(dir) / "ensemble.json");
    if (!mf) throw pipeline_error("cannot write ensemble manifest in " + dir);
    mf << manifest.dump(2) << "\n";
}

EnsembleModel load_bundle(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = fs::path(dir) / "ensemble.json";
    std::ifstream mf(manifest_path);
    if (!mf) throw missing_error("cannot open model bundle: " + manifest_path.string());

    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw pipeline_error("malformed ensemble manifest: " + std::string(e.what()));
    }
    if (manifest.value("format_version", 0) != 1) {
        throw pipeline_error("unsupported bundle format version in " + manifest_path.string());
    }

    EnsembleModel model;
    for (const auto& [name, file] : manifest.at("networks").items()) {
        const FeatureKind kind = feature_kind_from_string(name);
        LoadedNetwork loaded = load_network((fs::path(dir) / file.get<std::string>()).string());
        model.networks.emplace(kind, Network(std::move(loaded.spec), std::move(loaded.params)));
    }
    model.bar_spans = manifest.value("bar_spans", std::vector<std::vector<int>>{});
    if (manifest.contains("meta")) {
        model.meta = manifest.at("meta").get<std::map<std::string, std::string>>();
    }

    // Transitions.
    const fs::path tman_path = fs::path(dir) / manifest.value("transitions", "transitions.net");
    std::ifstream tman(tman_path);
    if (!tman) throw missing_error("cannot open transitions manifest: " + tman_path.string());
    std::string line;
    std::vector<int> lengths;
    std::string blob_name;
    bool version_ok = false;
    while (std::getline(tman, line)) {
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "format_version") {
            int v = 0;
            ss >> v;
            version_ok = (v == 1);
        } else if (key == "state_lengths") {
            int len = 0;
            while (ss >> len) lengths.push_back(len);
        } else if (key == "blob") {
            ss >> blob_name;
        }
    }
    if (!version_ok) throw pipeline_error("transitions manifest missing format_version");
    model.space = build_state_space(lengths);

    const fs::path tblob_path = fs::path(dir) / blob_name;
    std::ifstream tblob(tblob_path, std::ios::binary);
    if (!tblob) throw missing_error("cannot open transitions blob: " + tblob_path.string());
    model.transitions.a = Mat(model.space.size(), model.space.size());
    read_doubles_le(tblob, model.transitions.a.data.data(), model.transitions.a.data.size());
    if (!tblob) throw pipeline_error("transitions blob truncated: " + tblob_path.string());
    return model;
}

} // namespace downbeat
