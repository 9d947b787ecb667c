#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "recognet/checkpoint.hpp"
#include "recognet/metaimage.hpp"
#include "recognet/metrics.hpp"
#include "recognet/model.hpp"
#include "recognet/preprocess.hpp"

namespace recognet {

inline void warn_stderr(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

// ---------------------------------------------------------------------------
// Training configuration (flat key=value file)

struct TrainConfig {
    int epochs = 100;
    double lr = 1e-3;
    int subseq_len = 10;
    uint64_t seed = 0;
    ModelConfig model = ModelConfig::preset_default();
    std::string train_manifest;
    std::string eval_manifest;  // optional; used for cadence snapshots
    std::string checkpoint_dir = ".";
    std::string cache_dir;  // defaults to <checkpoint_dir>/cache
    int eval_cadence = 0;   // save/evaluate every N epochs; 0 = final only

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (!(lr > 0)) throw ConfigError("train: lr must be > 0");
        if (subseq_len < 1) throw ConfigError("train: subseq length must be >= 1");
        if (train_manifest.empty()) throw ConfigError("train: train_manifest is required");
        model.validate();
    }

    std::string resolved_cache_dir() const {
        return cache_dir.empty() ? (std::filesystem::path(checkpoint_dir) / "cache").string()
                                 : cache_dir;
    }

    static TrainConfig load(const std::string& path);
};

inline TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config: " + path);
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return (fp.is_absolute() ? fp : base / fp).string();
    };

    TrainConfig cfg;
    std::string model_preset = "default";
    bool recurrence = true, recurrence_set = false;
    int input_size = 0;
    double pos_weight = 0.0;
    bool pos_weight_set = false;

    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string trimmed;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c)) || !trimmed.empty()) trimmed += c;
        while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back())))
            trimmed.pop_back();
        if (trimmed.empty()) continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trimmed.substr(0, eq);
        const std::string val = trimmed.substr(eq + 1);
        if (key == "epochs")
            cfg.epochs = detail::parse_int(val, "epochs");
        else if (key == "lr")
            cfg.lr = detail::parse_double(val, "lr");
        else if (key == "subseq")
            cfg.subseq_len = detail::parse_int(val, "subseq");
        else if (key == "seed")
            cfg.seed = static_cast<uint64_t>(std::stoull(val));
        else if (key == "pos_weight") {
            pos_weight = detail::parse_double(val, "pos_weight");
            pos_weight_set = true;
        } else if (key == "model")
            model_preset = val;
        else if (key == "model.input_size")
            input_size = detail::parse_int(val, "model.input_size");
        else if (key == "model.recurrence") {
            recurrence = detail::parse_bool(val, "model.recurrence");
            recurrence_set = true;
        } else if (key == "train_manifest")
            cfg.train_manifest = resolve(val);
        else if (key == "eval_manifest")
            cfg.eval_manifest = resolve(val);
        else if (key == "checkpoint_dir")
            cfg.checkpoint_dir = resolve(val);
        else if (key == "cache_dir")
            cfg.cache_dir = resolve(val);
        else if (key == "eval_cadence")
            cfg.eval_cadence = detail::parse_int(val, "eval_cadence");
        else
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }

    if (model_preset == "default")
        cfg.model = ModelConfig::preset_default();
    else if (model_preset == "micro")
        cfg.model = ModelConfig::preset_micro();
    else
        throw ConfigError(path + ": unknown model preset '" + model_preset +
                          "' (expected default|micro)");
    if (input_size > 0) cfg.model.input_size = input_size;
    if (recurrence_set) cfg.model.recurrence_enabled = recurrence;
    if (pos_weight_set) cfg.model.pos_weight = pos_weight;
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Preprocessing cache keyed by source-file content hash and target size

namespace detail {

inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    char buf[65536];
    uint64_t h = 0xcbf29ce484222325ULL;
    while (is.read(buf, sizeof buf) || is.gcount() > 0)
        h = fnv1a(buf, static_cast<size_t>(is.gcount()), h);
    return h;
}

inline std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace detail

struct PreparedCase {
    std::string id;
    Volume volume;
    MaskVolume mask;
};

// Loads, preprocesses and caches one case. The cache key covers the source
// bytes, the target size and the artifact kind, so stale entries cannot be
// picked up after data edits.
inline PreparedCase prepare_case(const ManifestEntry& entry, int target_size,
                                 const std::string& cache_dir, const WarnFn& warn = warn_stderr) {
    std::filesystem::create_directories(cache_dir);
    PreparedCase out;
    out.id = entry.case_id;

    const uint64_t vh =
        detail::fnv1a(&target_size, sizeof target_size, detail::file_hash(entry.image_path));
    const auto vol_cache = (std::filesystem::path(cache_dir) / (detail::hex64(vh) + "_v.rvol")).string();
    if (std::filesystem::exists(vol_cache)) {
        out.volume = read_native_volume(vol_cache);
    } else {
        out.volume = preprocess(load_volume(entry.image_path), target_size, warn);
        write_native(out.volume, vol_cache);
    }
    out.volume.case_id = entry.case_id;

    const uint64_t mh =
        detail::fnv1a(&target_size, sizeof target_size, detail::file_hash(entry.mask_path));
    const auto mask_cache = (std::filesystem::path(cache_dir) / (detail::hex64(mh) + "_m.rvol")).string();
    if (std::filesystem::exists(mask_cache)) {
        out.mask = read_native_mask(mask_cache);
    } else {
        out.mask = preprocess_mask(load_mask(entry.mask_path), target_size);
        write_native(out.mask, mask_cache);
    }
    out.mask.case_id = entry.case_id;
    require_same_dims(out.mask, out.volume);
    return out;
}

// ---------------------------------------------------------------------------
// Training loop

struct EvalSnapshot {
    int epoch = 0;
    double mean_dsc = 0;
};

struct TrainLog {
    std::vector<float> step_losses;   // per-pixel BCE per optimization step
    std::vector<float> epoch_losses;  // per-epoch means
    std::vector<double> epoch_seconds;
    std::vector<EvalSnapshot> snapshots;

    // CSV schema: step,epoch,loss
    std::string csv() const {
        std::ostringstream os;
        os << "step,epoch,loss\n";
        size_t step = 0;
        const size_t per_epoch = epoch_losses.empty() ? step_losses.size()
                                                      : step_losses.size() / epoch_losses.size();
        for (size_t i = 0; i < step_losses.size(); ++i) {
            const size_t epoch = per_epoch ? i / per_epoch : 0;
            char buf[64];
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f\n", ++step, epoch + 1,
                          static_cast<double>(step_losses[i]));
            os << buf;
        }
        return os.str();
    }
};

struct TrainResult {
    ReCoGNet<float> model;
    TrainLog log;
    CheckpointMeta meta;
    std::string checkpoint_path;
    std::string log_path;
};

struct EvalOptions {
    bool corrupted = false;
    float corrupt_factor = 0.8f;
    double threshold = 0.5;
    std::string report_prefix = "report";
};

struct EvalResult {
    std::vector<MetricSet> per_case;
    std::vector<ProfileRecord> profiles;
    MetricSet mean;
    std::vector<std::string> skipped;
    std::string metrics_csv_path;
    std::string profiles_csv_path;
};

// Whole-sequence inference and reporting for every case of a manifest.
// Reports land in out_dir as <prefix>_metrics.csv / <prefix>_profiles.csv /
// <prefix>_metrics.txt. Missing or unreadable cases are skipped with a
// warning and recorded at the end of the metrics CSV.
inline EvalResult evaluate(const ReCoGNet<float>& model, const std::string& manifest_path,
                           const EvalOptions& opt, const std::string& out_dir,
                           const std::string& cache_dir, const WarnFn& warn = warn_stderr) {
    const auto entries = read_manifest(manifest_path);
    std::filesystem::create_directories(out_dir);
    EvalResult result;

    for (const auto& entry : entries) {
        PreparedCase c;
        try {
            c = prepare_case(entry, model.config.input_size, cache_dir, warn);
        } catch (const DataError& e) {
            warn("skipping case " + entry.case_id + ": " + e.what());
            result.skipped.push_back(entry.case_id + ": " + e.what());
            continue;
        }
        Volume input = opt.corrupted ? corrupt_contrast(c.volume, opt.corrupt_factor) : c.volume;
        Tensor<float> logits = model.forward(volume_to_tensor<float>(input));
        MaskVolume pred = predict_masks(logits, opt.threshold);
        pred.case_id = c.id;
        MetricSet m = volume_metrics(pred, c.mask);
        m.case_id = c.id;
        result.per_case.push_back(m);
        result.profiles.push_back({c.id, size_profile(c.mask), size_profile(pred)});
    }

    if (!result.per_case.empty()) result.mean = aggregate_mean(result.per_case);

    std::string csv = result.per_case.empty() ? "case,precision,recall,f1,iou,dsc\n"
                                              : metrics_csv(result.per_case);
    for (const auto& s : result.skipped) csv += "# skipped " + s + "\n";
    result.metrics_csv_path =
        (std::filesystem::path(out_dir) / (opt.report_prefix + "_metrics.csv")).string();
    std::ofstream(result.metrics_csv_path) << csv;

    result.profiles_csv_path =
        (std::filesystem::path(out_dir) / (opt.report_prefix + "_profiles.csv")).string();
    std::ofstream(result.profiles_csv_path) << profiles_csv(result.profiles);

    if (!result.per_case.empty()) {
        std::ofstream((std::filesystem::path(out_dir) / (opt.report_prefix + "_metrics.txt")).string())
            << metrics_table(result.per_case);
    }
    return result;
}

// One optimization step per training case per epoch: a random 10-slice
// subsequence (whole volume when shorter), forward, weighted BCE, backward,
// Adam. Deterministic for a fixed seed in this single-threaded form.
inline TrainResult train(const TrainConfig& cfg, const WarnFn& warn = warn_stderr) {
    cfg.validate();
    const auto entries = read_manifest(cfg.train_manifest);
    if (entries.empty()) throw DataError("train: empty manifest " + cfg.train_manifest);
    std::filesystem::create_directories(cfg.checkpoint_dir);
    const std::string cache_dir = cfg.resolved_cache_dir();

    std::vector<PreparedCase> cases;
    cases.reserve(entries.size());
    for (const auto& e : entries) cases.push_back(prepare_case(e, cfg.model.input_size, cache_dir, warn));

    TrainResult result;
    result.model = ReCoGNet<float>::create(cfg.model, cfg.seed);
    auto params = result.model.parameters();
    AdamConfig<float> acfg;
    acfg.lr = static_cast<float>(cfg.lr);
    AdamState<float> opt(params, acfg);
    const float pos_weight = static_cast<float>(cfg.model.pos_weight);

    Rng master(cfg.seed);
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng erng = master.derive(static_cast<uint64_t>(epoch) + 1);
        std::vector<size_t> order(cases.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        erng.shuffle(order);

        double epoch_loss = 0.0;
        for (size_t idx : order) {
            const auto& c = cases[idx];
            auto [sv, sm] = sample_subsequence(c.volume, c.mask, cfg.subseq_len, erng);
            Tensor<float> x = volume_to_tensor<float>(sv);
            Tensor<float> y = mask_to_tensor<float>(sm);
            Tensor<float> loss = bce_loss(result.model.forward(x), y, pos_weight);
            const float per_pixel = loss.item() / static_cast<float>(sv.slices);
            ++step;
            if (!std::isfinite(per_pixel))
                throw NumericError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                                   std::to_string(epoch + 1) + ", case " + c.id +
                                   "); last finite epoch-mean loss " +
                                   (result.log.epoch_losses.empty()
                                        ? std::string("n/a")
                                        : std::to_string(result.log.epoch_losses.back())));
            result.model.zero_grad();
            loss.backward();
            opt.step(params);
            result.log.step_losses.push_back(per_pixel);
            epoch_loss += per_pixel;
        }
        result.log.epoch_losses.push_back(static_cast<float>(epoch_loss / cases.size()));
        result.log.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

        if (cfg.eval_cadence > 0 && (epoch + 1) % cfg.eval_cadence == 0 && epoch + 1 < cfg.epochs) {
            CheckpointMeta meta{epoch + 1, cfg.seed, result.log.epoch_losses};
            const auto snap = (std::filesystem::path(cfg.checkpoint_dir) /
                               ("checkpoint_epoch" + std::to_string(epoch + 1) + ".ckpt"))
                                  .string();
            save_checkpoint(snap, result.model, &opt, meta);
            if (!cfg.eval_manifest.empty()) {
                EvalOptions eo;
                eo.report_prefix = "snapshot_epoch" + std::to_string(epoch + 1);
                auto er = evaluate(result.model, cfg.eval_manifest, eo, cfg.checkpoint_dir, cache_dir,
                                   warn);
                if (!er.per_case.empty())
                    result.log.snapshots.push_back({epoch + 1, er.mean.dsc});
            }
        }
    }

    result.meta = CheckpointMeta{cfg.epochs, cfg.seed, result.log.epoch_losses};
    result.checkpoint_path =
        (std::filesystem::path(cfg.checkpoint_dir) / "checkpoint_final.ckpt").string();
    save_checkpoint(result.checkpoint_path, result.model, &opt, result.meta);
    result.log_path = (std::filesystem::path(cfg.checkpoint_dir) / "train_log.csv").string();
    std::ofstream(result.log_path) << result.log.csv();
    return result;
}

}  // namespace recognet
