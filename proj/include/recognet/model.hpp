#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "recognet/convlstm.hpp"
#include "recognet/init.hpp"
#include "recognet/ops.hpp"

namespace recognet {

// ---------------------------------------------------------------------------
// Configuration

struct BackboneStageConfig {
    int channels = 16;
    int kernel = 3;
    int stride = 1;
    int dilation = 1;
    bool residual = true;
    bool norm_relu = true;
};

struct BackboneConfig {
    std::vector<BackboneStageConfig> stages;

    int downsample_factor() const {
        int d = 1;
        for (const auto& s : stages) d *= s.stride;
        return d;
    }
};

struct AsppConfig {
    std::vector<int> rates{1, 2, 4};
    int branch_channels = 32;
    int out_channels = 64;
    bool pointwise_branch = true;
    bool pooling_branch = true;
    bool fuse = true;
    bool norm_relu = true;

    int branch_count() const {
        return static_cast<int>(rates.size()) + (pointwise_branch ? 1 : 0) + (pooling_branch ? 1 : 0);
    }
};

struct HeadStageConfig {
    int channels = 32;
    int stride = 2;
};

struct HeadConfig {
    std::vector<HeadStageConfig> stages;
    int lstm_kernel = 3;
};

struct ModelConfig {
    int in_channels = 1;
    int input_size = 224;
    bool recurrence_enabled = true;
    double pos_weight = 1.0;
    BackboneConfig backbone;
    AsppConfig aspp;
    HeadConfig head;

    // 224-resolution configuration.
    static ModelConfig preset_default() {
        ModelConfig c;
        c.input_size = 224;
        c.backbone.stages = {{16, 3, 2, 1, false, true}, {32, 3, 2, 1, true, true},
                             {32, 3, 2, 2, true, true}};
        c.aspp = {{1, 2, 4}, 32, 64, true, true, true, true};
        c.head.stages = {{32, 2}, {32, 2}};
        return c;
    }

    // 64-resolution configuration sized for CPU experiments.
    static ModelConfig preset_micro() {
        ModelConfig c;
        c.input_size = 64;
        c.backbone.stages = {{8, 3, 2, 1, false, true}, {16, 3, 2, 1, true, true}};
        c.aspp = {{1, 2}, 8, 32, true, true, true, true};
        c.head.stages = {{16, 2}, {16, 2}};
        return c;
    }

    void validate() const {
        if (in_channels < 1) throw ConfigError("model: in_channels must be >= 1");
        if (input_size < 1) throw ConfigError("model: input_size must be >= 1");
        if (!(pos_weight > 0)) throw ConfigError("model: pos_weight must be > 0");
        if (backbone.stages.empty()) throw ConfigError("model: backbone needs at least one stage");
        for (const auto& s : backbone.stages) {
            if (s.channels < 1 || s.kernel < 1 || s.stride < 1 || s.dilation < 1)
                throw ConfigError("model: invalid backbone stage");
        }
        if (aspp.rates.empty()) throw ConfigError("model: aspp needs at least one rate");
        for (int r : aspp.rates)
            if (r < 1) throw ConfigError("model: aspp rates must be >= 1");
        if (aspp.branch_channels < 1 || aspp.out_channels < 1)
            throw ConfigError("model: invalid aspp channels");
        if (!aspp.fuse) {
            if (aspp.branch_count() != 1)
                throw ConfigError("model: aspp without fusion requires exactly one branch");
            if (aspp.out_channels != aspp.branch_channels)
                throw ConfigError("model: aspp without fusion requires out_channels == branch_channels");
        }
        if (head.stages.empty()) throw ConfigError("model: head needs at least one stage");
        for (const auto& s : head.stages)
            if (s.channels < 1 || s.stride < 1) throw ConfigError("model: invalid head stage");
        if (head.lstm_kernel < 1 || head.lstm_kernel % 2 == 0)
            throw ConfigError("model: lstm_kernel must be odd");
    }

    std::string canonical_text() const;
    static ModelConfig parse(const std::string& text);
};

namespace detail {

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

inline std::string ModelConfig::canonical_text() const {
    std::ostringstream os;
    os << "aspp_branch=" << aspp.branch_channels << '\n';
    os << "aspp_fuse=" << (aspp.fuse ? 1 : 0) << '\n';
    os << "aspp_norm_relu=" << (aspp.norm_relu ? 1 : 0) << '\n';
    os << "aspp_out=" << aspp.out_channels << '\n';
    os << "aspp_pointwise=" << (aspp.pointwise_branch ? 1 : 0) << '\n';
    os << "aspp_pooling=" << (aspp.pooling_branch ? 1 : 0) << '\n';
    os << "aspp_rates=";
    for (size_t i = 0; i < aspp.rates.size(); ++i) os << (i ? "," : "") << aspp.rates[i];
    os << '\n';
    os << "backbone=";
    for (size_t i = 0; i < backbone.stages.size(); ++i) {
        const auto& s = backbone.stages[i];
        os << (i ? "," : "") << s.channels << ':' << s.kernel << ':' << s.stride << ':' << s.dilation
           << ':' << (s.residual ? 1 : 0) << ':' << (s.norm_relu ? 1 : 0);
    }
    os << '\n';
    os << "head=";
    for (size_t i = 0; i < head.stages.size(); ++i)
        os << (i ? "," : "") << head.stages[i].channels << ':' << head.stages[i].stride;
    os << '\n';
    os << "in_channels=" << in_channels << '\n';
    os << "input_size=" << input_size << '\n';
    os << "lstm_kernel=" << head.lstm_kernel << '\n';
    os << "pos_weight=" << detail::format_double(pos_weight) << '\n';
    os << "recurrence=" << (recurrence_enabled ? 1 : 0) << '\n';
    return os.str();
}

namespace detail {

inline std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline int parse_int(const std::string& s, const char* what) {
    try {
        size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(std::string("config: bad integer for ") + what + ": '" + s + "'");
    }
}

inline double parse_double(const std::string& s, const char* what) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(std::string("config: bad number for ") + what + ": '" + s + "'");
    }
}

inline bool parse_bool(const std::string& s, const char* what) {
    if (s == "1" || s == "true") return true;
    if (s == "0" || s == "false") return false;
    throw ConfigError(std::string("config: bad boolean for ") + what + ": '" + s + "'");
}

}  // namespace detail

inline ModelConfig ModelConfig::parse(const std::string& text) {
    ModelConfig c;
    c.backbone.stages.clear();
    c.aspp.rates.clear();
    c.head.stages.clear();
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("model config: expected key=value, got '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "aspp_branch") {
            c.aspp.branch_channels = detail::parse_int(val, key.c_str());
        } else if (key == "aspp_fuse") {
            c.aspp.fuse = detail::parse_bool(val, key.c_str());
        } else if (key == "aspp_norm_relu") {
            c.aspp.norm_relu = detail::parse_bool(val, key.c_str());
        } else if (key == "aspp_out") {
            c.aspp.out_channels = detail::parse_int(val, key.c_str());
        } else if (key == "aspp_pointwise") {
            c.aspp.pointwise_branch = detail::parse_bool(val, key.c_str());
        } else if (key == "aspp_pooling") {
            c.aspp.pooling_branch = detail::parse_bool(val, key.c_str());
        } else if (key == "aspp_rates") {
            for (const auto& tok : detail::split_on(val, ','))
                c.aspp.rates.push_back(detail::parse_int(tok, "aspp_rates"));
        } else if (key == "backbone") {
            for (const auto& tok : detail::split_on(val, ',')) {
                const auto f = detail::split_on(tok, ':');
                if (f.size() != 6) throw ConfigError("model config: backbone stage needs 6 fields, got '" + tok + "'");
                BackboneStageConfig s;
                s.channels = detail::parse_int(f[0], "backbone.channels");
                s.kernel = detail::parse_int(f[1], "backbone.kernel");
                s.stride = detail::parse_int(f[2], "backbone.stride");
                s.dilation = detail::parse_int(f[3], "backbone.dilation");
                s.residual = detail::parse_bool(f[4], "backbone.residual");
                s.norm_relu = detail::parse_bool(f[5], "backbone.norm_relu");
                c.backbone.stages.push_back(s);
            }
        } else if (key == "head") {
            for (const auto& tok : detail::split_on(val, ',')) {
                const auto f = detail::split_on(tok, ':');
                if (f.size() != 2) throw ConfigError("model config: head stage needs 2 fields, got '" + tok + "'");
                c.head.stages.push_back(
                    {detail::parse_int(f[0], "head.channels"), detail::parse_int(f[1], "head.stride")});
            }
        } else if (key == "in_channels") {
            c.in_channels = detail::parse_int(val, key.c_str());
        } else if (key == "input_size") {
            c.input_size = detail::parse_int(val, key.c_str());
        } else if (key == "lstm_kernel") {
            c.head.lstm_kernel = detail::parse_int(val, key.c_str());
        } else if (key == "pos_weight") {
            c.pos_weight = detail::parse_double(val, key.c_str());
        } else if (key == "recurrence") {
            c.recurrence_enabled = detail::parse_bool(val, key.c_str());
        } else {
            throw ConfigError("model config: unknown key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Parameter registry

template <typename T>
using ParamList = std::vector<std::pair<std::string, Tensor<T>>>;

// ---------------------------------------------------------------------------
// Layer building blocks

template <typename T>
struct Conv2dModule {
    Tensor<T> w, b;
    int stride = 1, pad = 0, dil = 1;

    static Conv2dModule create(int cin, int cout, int kernel, int stride, int dilation, Rng& rng,
                               bool same_pad = true) {
        Conv2dModule m;
        m.stride = stride;
        m.dil = dilation;
        m.pad = same_pad ? dilation * (kernel - 1) / 2 : 0;
        m.w = Tensor<T>::zeros({cout, cin, kernel, kernel}, true);
        m.b = Tensor<T>::zeros({cout}, true);
        kaiming_uniform_conv(m.w, rng);
        return m;
    }

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad, dil); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.emplace_back(prefix + ".w", w);
        out.emplace_back(prefix + ".b", b);
    }
};

template <typename T>
struct ConvTranspose2dModule {
    Tensor<T> w, b;  // w: [cin, cout, k, k]
    int stride = 1;

    static ConvTranspose2dModule create(int cin, int cout, int kernel, int stride, Rng& rng) {
        ConvTranspose2dModule m;
        m.stride = stride;
        m.w = Tensor<T>::zeros({cin, cout, kernel, kernel}, true);
        m.b = Tensor<T>::zeros({cout}, true);
        kaiming_uniform(m.w, rng, cin * kernel * kernel);
        return m;
    }

    Tensor<T> forward(const Tensor<T>& x) const { return conv_transpose2d(x, w, b, stride, 0); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.emplace_back(prefix + ".w", w);
        out.emplace_back(prefix + ".b", b);
    }
};

template <typename T>
struct NormModule {
    Tensor<T> gamma, beta;

    static NormModule create(int channels) {
        NormModule m;
        m.gamma = Tensor<T>::full({channels}, T(1), true);
        m.beta = Tensor<T>::zeros({channels}, true);
        return m;
    }

    Tensor<T> forward(const Tensor<T>& x) const { return channel_norm(x, gamma, beta); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.emplace_back(prefix + ".gamma", gamma);
        out.emplace_back(prefix + ".beta", beta);
    }
};

// ---------------------------------------------------------------------------
// Backbone: per-slice feature extraction. Slices ride the batch axis, so no
// cross-slice mixing can occur here.

template <typename T>
struct BackboneStage {
    BackboneStageConfig cfg;
    Conv2dModule<T> conv1;
    std::optional<NormModule<T>> norm1;
    // residual-only members
    std::optional<Conv2dModule<T>> conv2;
    std::optional<NormModule<T>> norm2;
    std::optional<Conv2dModule<T>> proj;
    std::optional<NormModule<T>> proj_norm;

    static BackboneStage create(int cin, const BackboneStageConfig& cfg, Rng& rng) {
        BackboneStage s;
        s.cfg = cfg;
        s.conv1 = Conv2dModule<T>::create(cin, cfg.channels, cfg.kernel, cfg.stride, cfg.dilation, rng);
        if (cfg.norm_relu) s.norm1 = NormModule<T>::create(cfg.channels);
        if (cfg.residual) {
            s.conv2 = Conv2dModule<T>::create(cfg.channels, cfg.channels, cfg.kernel, 1, cfg.dilation, rng);
            if (cfg.norm_relu) s.norm2 = NormModule<T>::create(cfg.channels);
            if (cfg.stride != 1 || cin != cfg.channels) {
                s.proj = Conv2dModule<T>::create(cin, cfg.channels, 1, cfg.stride, 1, rng);
                if (cfg.norm_relu) s.proj_norm = NormModule<T>::create(cfg.channels);
            }
        }
        return s;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> h = conv1.forward(x);
        if (norm1) h = norm1->forward(h);
        if (!cfg.residual) return cfg.norm_relu ? relu(h) : h;
        h = relu(h);
        h = conv2->forward(h);
        if (norm2) h = norm2->forward(h);
        Tensor<T> shortcut = x;
        if (proj) {
            shortcut = proj->forward(x);
            if (proj_norm) shortcut = proj_norm->forward(shortcut);
        }
        return relu(add(h, shortcut));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        conv1.collect(prefix + ".conv1", out);
        if (norm1) norm1->collect(prefix + ".norm1", out);
        if (conv2) conv2->collect(prefix + ".conv2", out);
        if (norm2) norm2->collect(prefix + ".norm2", out);
        if (proj) proj->collect(prefix + ".proj", out);
        if (proj_norm) proj_norm->collect(prefix + ".projnorm", out);
    }
};

template <typename T>
struct Backbone {
    std::vector<BackboneStage<T>> stages;
    int downsample = 1;

    static Backbone create(int in_channels, const BackboneConfig& cfg, Rng& rng) {
        Backbone b;
        b.downsample = cfg.downsample_factor();
        int cin = in_channels;
        for (const auto& sc : cfg.stages) {
            b.stages.push_back(BackboneStage<T>::create(cin, sc, rng));
            cin = sc.channels;
        }
        return b;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        detail::require_rank4(x.shape(), "backbone_forward", "input");
        if (x.extent(2) % downsample != 0 || x.extent(3) % downsample != 0)
            throw std::invalid_argument("backbone_forward: input " + shape_str(x.shape()) +
                                        " must have spatial extents divisible by " +
                                        std::to_string(downsample));
        Tensor<T> h = x;
        for (const auto& s : stages) h = s.forward(h);
        return h;
    }

    void collect(ParamList<T>& out) {
        for (size_t i = 0; i < stages.size(); ++i)
            stages[i].collect("backbone.s" + std::to_string(i), out);
    }
};

// ---------------------------------------------------------------------------
// ASPP: parallel dilated 3x3 branches, an optional 1x1 branch, and an
// optional image-pooling branch, concatenated and fused by a 1x1 conv. The
// pooling branch carries no normalization: its map is 1x1 in space, where
// spatial statistics are degenerate.

template <typename T>
struct Aspp {
    AsppConfig cfg;
    std::vector<Conv2dModule<T>> rate_convs;
    std::vector<NormModule<T>> rate_norms;
    std::optional<Conv2dModule<T>> point_conv;
    std::optional<NormModule<T>> point_norm;
    std::optional<Conv2dModule<T>> pool_conv;
    std::optional<Conv2dModule<T>> fuse_conv;
    std::optional<NormModule<T>> fuse_norm;

    static Aspp create(int in_channels, const AsppConfig& cfg, Rng& rng) {
        Aspp a;
        a.cfg = cfg;
        for (int r : cfg.rates) {
            a.rate_convs.push_back(Conv2dModule<T>::create(in_channels, cfg.branch_channels, 3, 1, r, rng));
            if (cfg.norm_relu) a.rate_norms.push_back(NormModule<T>::create(cfg.branch_channels));
        }
        if (cfg.pointwise_branch) {
            a.point_conv = Conv2dModule<T>::create(in_channels, cfg.branch_channels, 1, 1, 1, rng);
            if (cfg.norm_relu) a.point_norm = NormModule<T>::create(cfg.branch_channels);
        }
        if (cfg.pooling_branch)
            a.pool_conv = Conv2dModule<T>::create(in_channels, cfg.branch_channels, 1, 1, 1, rng);
        if (cfg.fuse) {
            a.fuse_conv = Conv2dModule<T>::create(cfg.branch_count() * cfg.branch_channels,
                                                  cfg.out_channels, 1, 1, 1, rng);
            if (cfg.norm_relu) a.fuse_norm = NormModule<T>::create(cfg.out_channels);
        }
        return a;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        detail::require_rank4(x.shape(), "aspp_forward", "input");
        const int h = x.extent(2), w = x.extent(3);
        std::vector<Tensor<T>> branches;
        for (size_t i = 0; i < rate_convs.size(); ++i) {
            Tensor<T> b = rate_convs[i].forward(x);
            if (cfg.norm_relu) b = relu(rate_norms[i].forward(b));
            branches.push_back(b);
        }
        if (point_conv) {
            Tensor<T> b = point_conv->forward(x);
            if (point_norm) b = relu(point_norm->forward(b));
            branches.push_back(b);
        }
        if (pool_conv) {
            Tensor<T> pooled = pool_conv->forward(global_avg_pool(x));
            branches.push_back(bilinear_resize(pooled, h, w));
        }
        Tensor<T> merged = branches.size() == 1 ? branches[0] : concat(branches, 1);
        if (!fuse_conv) return merged;
        Tensor<T> fused = fuse_conv->forward(merged);
        if (fuse_norm) fused = relu(fuse_norm->forward(fused));
        return fused;
    }

    void collect(ParamList<T>& out) {
        for (size_t i = 0; i < rate_convs.size(); ++i) {
            const std::string p = "aspp.rate" + std::to_string(cfg.rates[i]);
            rate_convs[i].collect(p + ".conv", out);
            if (cfg.norm_relu) rate_norms[i].collect(p + ".norm", out);
        }
        if (point_conv) point_conv->collect("aspp.point.conv", out);
        if (point_norm) point_norm->collect("aspp.point.norm", out);
        if (pool_conv) pool_conv->collect("aspp.pool.conv", out);
        if (fuse_conv) fuse_conv->collect("aspp.fuse.conv", out);
        if (fuse_norm) fuse_norm->collect("aspp.fuse.norm", out);
    }
};

// ---------------------------------------------------------------------------
// Slice <-> sequence rearrangement

template <typename T>
std::vector<Tensor<T>> split_slices(const Tensor<T>& batched) {
    std::vector<Tensor<T>> out;
    out.reserve(batched.extent(0));
    for (int s = 0; s < batched.extent(0); ++s) out.push_back(narrow(batched, 0, s, 1));
    return out;
}

template <typename T>
Tensor<T> stack_slices(const std::vector<Tensor<T>>& slices) {
    return slices.size() == 1 ? slices[0] : concat(slices, 0);
}

// ---------------------------------------------------------------------------
// Sequence block: ConvLSTM when recurrence is enabled, a stateless conv of
// identical activation shapes (with a tanh to match the hidden-state range)
// when ablated.

template <typename T>
struct SequenceBlock {
    bool recurrent = true;
    std::optional<ConvLstmParams<T>> cell;
    std::optional<Conv2dModule<T>> stateless;

    static SequenceBlock create(int channels, int kernel, bool recurrent, Rng& rng) {
        SequenceBlock b;
        b.recurrent = recurrent;
        if (recurrent)
            b.cell = ConvLstmParams<T>::init(channels, channels, kernel, rng);
        else
            b.stateless = Conv2dModule<T>::create(channels, channels, kernel, 1, 1, rng);
        return b;
    }

    std::vector<Tensor<T>> run(const std::vector<Tensor<T>>& xs) const {
        if (recurrent) return run_sequence(xs, *cell).hiddens;
        std::vector<Tensor<T>> out;
        out.reserve(xs.size());
        for (const auto& x : xs) out.push_back(tanh_op(stateless->forward(x)));
        return out;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        if (recurrent) {
            out.emplace_back(prefix + ".cell.w", cell->weight);
            out.emplace_back(prefix + ".cell.b", cell->bias);
        } else {
            stateless->collect(prefix + ".conv", out);
        }
    }
};

// ---------------------------------------------------------------------------
// Recurrent encoder-decoder head. Encoder stage: strided conv + norm + relu,
// then a sequence block. Decoder mirrors each stage: sequence block at the
// coarse grid, transpose-conv upsample, skip concatenation with the matching
// encoder level, then a fusing conv.

template <typename T>
struct Head {
    HeadConfig cfg;
    int in_channels = 0;
    bool recurrence = true;

    struct EncStage {
        Conv2dModule<T> conv;
        NormModule<T> norm;
        SequenceBlock<T> seq;
    };
    struct DecStage {
        SequenceBlock<T> seq;
        ConvTranspose2dModule<T> up;
        NormModule<T> up_norm;
        Conv2dModule<T> fuse;
        NormModule<T> fuse_norm;
    };

    std::vector<EncStage> enc;
    std::vector<DecStage> dec;  // dec[i] mirrors enc[i]; applied from back to front
    Conv2dModule<T> out_conv;

    static Head create(int in_channels, const HeadConfig& cfg, bool recurrence, Rng& rng) {
        Head h;
        h.cfg = cfg;
        h.in_channels = in_channels;
        h.recurrence = recurrence;
        const int k = cfg.lstm_kernel;
        std::vector<int> ch{in_channels};
        for (const auto& s : cfg.stages) ch.push_back(s.channels);
        for (size_t i = 0; i < cfg.stages.size(); ++i) {
            EncStage e;
            e.conv = Conv2dModule<T>::create(ch[i], ch[i + 1], 3, cfg.stages[i].stride, 1, rng);
            e.norm = NormModule<T>::create(ch[i + 1]);
            e.seq = SequenceBlock<T>::create(ch[i + 1], k, recurrence, rng);
            h.enc.push_back(std::move(e));
        }
        for (size_t i = 0; i < cfg.stages.size(); ++i) {
            // Decoder stage i upsamples from the level-(i+1) grid back to the
            // level-i grid; its working width stays at the level-max(i,1)
            // channel count.
            const int cin = ch[i + 1];
            const int cout = ch[std::max<size_t>(i, 1)];
            const int skip_ch = ch[i];
            DecStage d;
            d.seq = SequenceBlock<T>::create(cin, k, recurrence, rng);
            d.up = ConvTranspose2dModule<T>::create(cin, cout, cfg.stages[i].stride,
                                                    cfg.stages[i].stride, rng);
            d.up_norm = NormModule<T>::create(cout);
            d.fuse = Conv2dModule<T>::create(cout + skip_ch, cout, 3, 1, 1, rng);
            d.fuse_norm = NormModule<T>::create(cout);
            h.dec.push_back(std::move(d));
        }
        h.out_conv = Conv2dModule<T>::create(ch[1], 1, 1, 1, 1, rng);
        return h;
    }

    // features: [S, Cfeat, h, w]; returns logits [S, 1, out_h, out_w].
    Tensor<T> forward(const Tensor<T>& features, int out_h, int out_w) const {
        detail::require_rank4(features.shape(), "head_forward", "features");
        if (features.extent(1) != in_channels)
            throw std::invalid_argument("head_forward: feature channels " +
                                        std::to_string(features.extent(1)) + " do not match head input " +
                                        std::to_string(in_channels));
        // Encoder
        std::vector<Tensor<T>> levels{features};  // batched per level
        Tensor<T> cur = features;
        for (size_t i = 0; i < enc.size(); ++i) {
            if (cur.extent(2) % cfg.stages[i].stride != 0 || cur.extent(3) % cfg.stages[i].stride != 0)
                throw std::invalid_argument("head encoder stage " + std::to_string(i) + ": grid " +
                                            std::to_string(cur.extent(2)) + "x" +
                                            std::to_string(cur.extent(3)) + " not divisible by stride " +
                                            std::to_string(cfg.stages[i].stride));
            Tensor<T> a = relu(enc[i].norm.forward(enc[i].conv.forward(cur)));
            cur = stack_slices(enc[i].seq.run(split_slices(a)));
            levels.push_back(cur);
        }
        // Decoder
        for (size_t ri = dec.size(); ri-- > 0;) {
            const DecStage& d = dec[ri];
            cur = stack_slices(d.seq.run(split_slices(cur)));
            Tensor<T> up = relu(d.up_norm.forward(d.up.forward(cur)));
            const Tensor<T>& skip = levels[ri];
            if (up.extent(2) != skip.extent(2) || up.extent(3) != skip.extent(3))
                throw std::invalid_argument("head decoder stage " + std::to_string(ri) +
                                            ": upsampled grid " + std::to_string(up.extent(2)) + "x" +
                                            std::to_string(up.extent(3)) + " does not match skip grid " +
                                            std::to_string(skip.extent(2)) + "x" +
                                            std::to_string(skip.extent(3)));
            cur = relu(d.fuse_norm.forward(d.fuse.forward(concat<T>({up, skip}, 1))));
        }
        Tensor<T> logits = out_conv.forward(cur);
        if (logits.extent(2) != out_h || logits.extent(3) != out_w)
            logits = bilinear_resize(logits, out_h, out_w);
        return logits;
    }

    void collect(ParamList<T>& out) {
        for (size_t i = 0; i < enc.size(); ++i) {
            const std::string p = "head.enc" + std::to_string(i);
            enc[i].conv.collect(p + ".conv", out);
            enc[i].norm.collect(p + ".norm", out);
            enc[i].seq.collect(p + ".seq", out);
        }
        for (size_t i = 0; i < dec.size(); ++i) {
            const std::string p = "head.dec" + std::to_string(i);
            dec[i].seq.collect(p + ".seq", out);
            dec[i].up.collect(p + ".up", out);
            dec[i].up_norm.collect(p + ".upnorm", out);
            dec[i].fuse.collect(p + ".fuse", out);
            dec[i].fuse_norm.collect(p + ".fusenorm", out);
        }
        out_conv.collect("head.out", out);
    }
};

// ---------------------------------------------------------------------------
// Full model

template <typename T>
struct ReCoGNet {
    ModelConfig config;
    Backbone<T> backbone;
    Aspp<T> aspp;
    Head<T> head;

    static ReCoGNet create(const ModelConfig& cfg, uint64_t seed) {
        cfg.validate();
        Rng rng(seed);
        ReCoGNet m;
        m.config = cfg;
        m.backbone = Backbone<T>::create(cfg.in_channels, cfg.backbone, rng);
        m.aspp = Aspp<T>::create(cfg.backbone.stages.back().channels, cfg.aspp, rng);
        m.head = Head<T>::create(cfg.aspp.out_channels, cfg.head, cfg.recurrence_enabled, rng);
        return m;
    }

    // Per-slice feature extraction (stages + ASPP): [S,Cin,H,W] -> [S,Cfeat,H/d,W/d].
    Tensor<T> extract_features(const Tensor<T>& slices) const {
        return aspp.forward(backbone.forward(slices));
    }

    // Whole pipeline: [S,Cin,H,W] -> logits [S,1,H,W].
    Tensor<T> forward(const Tensor<T>& volume) const {
        return head.forward(extract_features(volume), volume.extent(2), volume.extent(3));
    }

    ParamList<T> named_parameters() {
        ParamList<T> out;
        backbone.collect(out);
        aspp.collect(out);
        head.collect(out);
        return out;
    }

    std::vector<Tensor<T>> parameters() {
        std::vector<Tensor<T>> flat;
        for (auto& [name, t] : named_parameters()) flat.push_back(t);
        return flat;
    }

    void zero_grad() {
        for (auto& p : parameters()) p.zero_grad();
    }
};

// Loss of Eq-style training: stable weighted BCE on logits, positive class
// scaled by pos_weight, averaged over pixels and summed over slices.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& targets, T pos_weight = T(1)) {
    return bce_with_logits(logits, targets, pos_weight);
}

}  // namespace recognet
