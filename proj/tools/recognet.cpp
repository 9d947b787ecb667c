// Command-line front end: synthetic dataset generation, training, evaluation,
// contrast corruption, gradient checking and file inspection. Emits files
// only; exit codes are 0 success, 1 usage error, 2 data error, 3 numeric
// abort.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "recognet/checkpoint.hpp"
#include "recognet/gradcheck.hpp"
#include "recognet/metaimage.hpp"
#include "recognet/phantom.hpp"
#include "recognet/train.hpp"

namespace fs = std::filesystem;
using namespace recognet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct PhantomArgs {
    std::string out_dir;
    int count = 1;
    uint64_t seed = 0;
    std::string size = "64x64";
    int slices = 12;
    double noise = 0.03;
    double contrast = 0.5;
    double texture = 0.15;
    double background = 0.2;
};

std::pair<int, int> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos)
        throw ConfigError("--size expects HxW, got '" + s + "'");
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
}

int run_phantom(const PhantomArgs& a) {
    const auto [h, w] = parse_size(a.size);
    fs::create_directories(a.out_dir);
    Rng master(a.seed);
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < a.count; ++i) {
        PhantomSpec spec;
        spec.seed = master.next_u64();
        spec.height = h;
        spec.width = w;
        spec.min_slices = spec.max_slices = a.slices;
        spec.noise = static_cast<float>(a.noise);
        spec.contrast = static_cast<float>(a.contrast);
        spec.texture = static_cast<float>(a.texture);
        spec.background = static_cast<float>(a.background);
        auto [vol, mask] = generate_phantom(spec);
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "case%03d", i);
        const std::string vol_name = std::string(idbuf) + "_vol.rvol";
        const std::string mask_name = std::string(idbuf) + "_mask.rvol";
        write_native(vol, (fs::path(a.out_dir) / vol_name).string());
        write_native(mask, (fs::path(a.out_dir) / mask_name).string());
        entries.push_back({idbuf, vol_name, mask_name});
    }
    write_manifest(entries, (fs::path(a.out_dir) / "manifest.txt").string());
    std::cout << "wrote " << a.count << " phantom case(s) to " << a.out_dir << '\n';
    return 0;
}

int run_train(const std::string& config_path) {
    const TrainConfig cfg = TrainConfig::load(config_path);
    auto result = train(cfg);
    std::cout << "checkpoint: " << result.checkpoint_path << '\n';
    std::cout << "log:        " << result.log_path << '\n';
    std::printf("final epoch-mean loss/pixel: %.6f\n",
                static_cast<double>(result.log.epoch_losses.back()));
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string manifest;
    std::string out_dir = ".";
    bool corrupted = false;
    bool ablation = false;
    double factor = 0.8;
    double threshold = 0.5;
};

int run_eval(const EvalArgs& a) {
    auto ck = load_checkpoint<float>(a.checkpoint);
    if (a.ablation && ck.model.config.recurrence_enabled)
        throw DataError("--ablation given but checkpoint " + a.checkpoint +
                        " was trained with recurrence enabled");
    EvalOptions opt;
    opt.corrupted = a.corrupted;
    opt.corrupt_factor = static_cast<float>(a.factor);
    opt.threshold = a.threshold;
    opt.report_prefix = std::string(a.ablation ? "ablation_" : "") +
                        (a.corrupted ? "corrupted" : "clean");
    const std::string cache = (fs::path(a.out_dir) / "cache").string();
    auto result = evaluate(ck.model, a.manifest, opt, a.out_dir, cache);
    if (result.per_case.empty()) throw DataError("no evaluable cases in " + a.manifest);
    std::cout << "metrics:  " << result.metrics_csv_path << '\n';
    std::cout << "profiles: " << result.profiles_csv_path << '\n';
    std::printf("mean over %zu case(s): precision %.4f recall %.4f f1 %.4f dsc %.4f iou %.4f\n",
                result.per_case.size(), result.mean.precision, result.mean.recall, result.mean.f1,
                result.mean.dsc, result.mean.iou);
    return 0;
}

int run_corrupt(const std::string& in, const std::string& out, double factor) {
    Volume v = read_native_volume(in);
    float lo = v.voxels.empty() ? 0.0f : v.voxels[0], hi = lo;
    for (float x : v.voxels) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (lo < -1e-6f || hi > 1.0f + 1e-6f)
        warn_stderr(in + " has intensities in [" + std::to_string(lo) + "," + std::to_string(hi) +
                    "]; contrast corruption expects preprocessed [0,1] volumes");
    write_native(corrupt_contrast(v, static_cast<float>(factor)), out);
    std::cout << "wrote " << out << '\n';
    return 0;
}

int run_gradcheck(const std::string& precision) {
    bool ok = true;
    if (precision == "wide" || precision == "both") {
        auto report = gradcheck_suite(true);
        std::cout << "wide precision (threshold " << report.threshold << "):\n"
                  << report.to_string();
        ok = ok && report.all_pass();
    }
    if (precision == "standard" || precision == "both") {
        auto report = gradcheck_suite(false);
        std::cout << "standard precision (threshold " << report.threshold << "):\n"
                  << report.to_string();
        ok = ok && report.all_pass();
    }
    if (!ok) {
        std::cerr << "gradient check failed\n";
        return kExitNumeric;
    }
    return 0;
}

int run_inspect(const std::string& path) {
    if (!fs::exists(path)) throw DataError("no such file: " + path);
    const bool meta = is_metaimage_path(path);
    // Try the mask reading first for native files; fall back to volume.
    bool is_mask = false;
    MaskVolume mask;
    Volume vol;
    try {
        mask = meta ? read_metaimage_mask(path) : read_native_mask(path);
        is_mask = true;
    } catch (const DataError&) {
        vol = meta ? read_metaimage(path) : read_native_volume(path);
    }
    if (is_mask) {
        std::printf("mask %s: dims %d %d %d\n", mask.case_id.c_str(), mask.slices, mask.height,
                    mask.width);
        uint64_t fg = 0;
        for (auto b : mask.voxels) fg += b;
        std::printf("foreground fraction: %.6f\n",
                    static_cast<double>(fg) / static_cast<double>(mask.numel()));
        const auto prof = size_profile(mask);
        for (size_t s = 0; s < prof.size(); ++s)
            std::printf("slice %zu rel_size %.6f\n", s + 1, prof[s]);
    } else {
        std::printf("volume %s: dims %d %d %d\n", vol.case_id.c_str(), vol.slices, vol.height,
                    vol.width);
        if (vol.has_spacing)
            std::printf("spacing: %g %g %g\n", vol.spacing[0], vol.spacing[1], vol.spacing[2]);
        float lo = vol.voxels[0], hi = lo;
        double mean = 0;
        for (float x : vol.voxels) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
            mean += x;
        }
        mean /= static_cast<double>(vol.numel());
        std::printf("range: [%g, %g]  mean %.6f\n", lo, hi, mean);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ReCoGNet: recurrent context-guided segmentation of 3D volumes"};
    app.require_subcommand(1);

    PhantomArgs pa;
    auto* phantom = app.add_subcommand("phantom", "generate a synthetic dataset + manifest");
    phantom->add_option("--out", pa.out_dir, "output directory")->required();
    phantom->add_option("--count", pa.count, "number of cases")->check(CLI::PositiveNumber);
    phantom->add_option("--seed", pa.seed, "RNG seed");
    phantom->add_option("--size", pa.size, "slice size HxW (default 64x64)");
    phantom->add_option("--slices", pa.slices, "slices per volume")->check(CLI::PositiveNumber);
    phantom->add_option("--noise", pa.noise, "additive noise level");
    phantom->add_option("--contrast", pa.contrast, "blob intensity over background");
    phantom->add_option("--texture", pa.texture, "background texture amplitude");
    phantom->add_option("--background", pa.background, "background intensity");

    std::string config_path;
    auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
    train_cmd->add_option("--config", config_path, "key=value config file")->required();

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over a manifest");
    eval_cmd->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--manifest", ea.manifest, "dataset manifest")->required();
    eval_cmd->add_option("--out", ea.out_dir, "report directory (default .)");
    eval_cmd->add_flag("--corrupted", ea.corrupted, "corrupt second-half contrast before inference");
    eval_cmd->add_flag("--ablation", ea.ablation, "expect a recurrence-disabled checkpoint");
    eval_cmd->add_option("--factor", ea.factor, "contrast factor for --corrupted (default 0.8)");
    eval_cmd->add_option("--threshold", ea.threshold, "mask threshold (default 0.5)");

    std::string corrupt_in, corrupt_out;
    double corrupt_factor = 0.8;
    auto* corrupt_cmd = app.add_subcommand("corrupt", "contrast-corrupt a native volume");
    corrupt_cmd->add_option("--in", corrupt_in, "input .rvol volume")->required();
    corrupt_cmd->add_option("--out", corrupt_out, "output .rvol volume")->required();
    corrupt_cmd->add_option("--factor", corrupt_factor, "contrast factor (default 0.8)");

    std::string precision = "wide";
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gradcheck_cmd->add_option("--precision", precision, "wide|standard|both")
        ->check(CLI::IsMember({"wide", "standard", "both"}));

    std::string inspect_in;
    auto* inspect_cmd = app.add_subcommand("inspect", "dump header/summary of a volume or mask");
    inspect_cmd->add_option("--in", inspect_in, "input file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*phantom) return run_phantom(pa);
        if (*train_cmd) return run_train(config_path);
        if (*eval_cmd) return run_eval(ea);
        if (*corrupt_cmd) return run_corrupt(corrupt_in, corrupt_out, corrupt_factor);
        if (*gradcheck_cmd) return run_gradcheck(precision);
        if (*inspect_cmd) return run_inspect(inspect_in);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return 0;
}
