#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "recognet/adam.hpp"
#include "recognet/model.hpp"

namespace recognet {

struct CheckpointMeta {
    int64_t epoch = 0;
    uint64_t seed = 0;
    std::vector<float> loss_history;  // per-epoch mean loss
};

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
    put_u32(os, static_cast<uint32_t>(v & 0xffffffffu));
    put_u32(os, static_cast<uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

inline void put_f64(std::ostream& os, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(os, u);
}

struct ByteReader {
    std::vector<unsigned char> bytes;
    size_t pos = 0;
    std::string path;

    void need(size_t n) const {
        if (pos + n > bytes.size())
            throw DataError("truncated checkpoint " + path + " at byte " + std::to_string(pos));
    }
    uint32_t u32() {
        need(4);
        const uint32_t v = uint32_t(bytes[pos]) | (uint32_t(bytes[pos + 1]) << 8) |
                           (uint32_t(bytes[pos + 2]) << 16) | (uint32_t(bytes[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        const uint64_t lo = u32();
        const uint64_t hi = u32();
        return lo | (hi << 32);
    }
    float f32() {
        const uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    double f64() {
        const uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace detail

inline constexpr char kCheckpointMagic[] = "RCGNET1\n";

// Versioned container: magic, canonical config text, training metadata, then
// every named parameter as (name, shape, little-endian float32 payload),
// optionally followed by Adam state.
template <typename T>
void save_checkpoint(const std::string& path, ReCoGNet<T>& model, const AdamState<T>* optimizer,
                     const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(kCheckpointMagic, 8);

    const std::string cfg = model.config.canonical_text();
    detail::put_u32(os, static_cast<uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

    detail::put_u64(os, meta.seed);
    detail::put_u64(os, static_cast<uint64_t>(meta.epoch));
    detail::put_u32(os, static_cast<uint32_t>(meta.loss_history.size()));
    for (float v : meta.loss_history) detail::put_f32(os, v);

    auto params = model.named_parameters();
    detail::put_u32(os, static_cast<uint32_t>(params.size()));
    for (auto& [name, t] : params) {
        detail::put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_u32(os, static_cast<uint32_t>(t.shape().size()));
        for (int e : t.shape()) detail::put_u32(os, static_cast<uint32_t>(e));
        for (T v : t.data()) detail::put_f32(os, static_cast<float>(v));
    }

    os.put(optimizer ? 1 : 0);
    if (optimizer) {
        const auto& c = optimizer->config();
        detail::put_f64(os, static_cast<double>(c.lr));
        detail::put_f64(os, static_cast<double>(c.beta1));
        detail::put_f64(os, static_cast<double>(c.beta2));
        detail::put_f64(os, static_cast<double>(c.eps));
        detail::put_u64(os, static_cast<uint64_t>(optimizer->step_count()));
        for (const auto& m : optimizer->first_moments())
            for (T v : m) detail::put_f32(os, static_cast<float>(v));
        for (const auto& v2 : optimizer->second_moments())
            for (T v : v2) detail::put_f32(os, static_cast<float>(v));
    }
    if (!os) throw DataError("write failed: " + path);
}

template <typename T>
struct Checkpoint {
    ReCoGNet<T> model;
    CheckpointMeta meta;
    std::optional<AdamState<T>> optimizer;
};

// Best-effort import from any checkpoint-format file into an existing model:
// tensors are matched by name, copied when shapes agree, and reported back.
// Intended as the injection point for externally converted pretrained
// weights; unlike load_checkpoint it neither requires nor checks a config
// match.
template <typename T>
struct ImportReport {
    std::vector<std::string> imported;
    std::vector<std::string> skipped;  // name + reason
};

template <typename T>
ImportReport<T> import_named_tensors(ReCoGNet<T>& model, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open tensor file: " + path);
    detail::ByteReader r;
    r.path = path;
    is.seekg(0, std::ios::end);
    r.bytes.resize(static_cast<size_t>(is.tellg()));
    is.seekg(0);
    is.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(r.bytes.size()));

    if (r.str(8) != kCheckpointMagic) throw DataError("bad magic in " + path);
    r.str(r.u32());           // config text, ignored
    r.u64();                  // seed
    r.u64();                  // epoch
    const uint32_t losses = r.u32();
    for (uint32_t i = 0; i < losses; ++i) r.f32();

    auto params = model.named_parameters();
    ImportReport<T> report;
    const uint32_t count = r.u32();
    for (uint32_t pi = 0; pi < count; ++pi) {
        const std::string name = r.str(r.u32());
        const uint32_t rank = r.u32();
        Shape shape(rank);
        for (auto& e : shape) e = static_cast<int>(r.u32());
        std::vector<float> payload(static_cast<size_t>(shape_numel(shape)));
        for (auto& v : payload) v = r.f32();

        auto it = std::find_if(params.begin(), params.end(),
                               [&](const auto& p) { return p.first == name; });
        if (it == params.end()) {
            report.skipped.push_back(name + ": no such parameter");
        } else if (it->second.shape() != shape) {
            report.skipped.push_back(name + ": shape " + shape_str(shape) + " vs model " +
                                     shape_str(it->second.shape()));
        } else {
            auto& dst = it->second.data();
            for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(payload[i]);
            report.imported.push_back(name);
        }
    }
    return report;
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    detail::ByteReader r;
    r.path = path;
    is.seekg(0, std::ios::end);
    r.bytes.resize(static_cast<size_t>(is.tellg()));
    is.seekg(0);
    is.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(r.bytes.size()));

    if (r.str(8) != kCheckpointMagic) throw DataError("bad checkpoint magic in " + path);
    const std::string cfg_text = r.str(r.u32());
    const ModelConfig config = ModelConfig::parse(cfg_text);

    Checkpoint<T> ck;
    ck.meta.seed = r.u64();
    ck.meta.epoch = static_cast<int64_t>(r.u64());
    ck.meta.loss_history.resize(r.u32());
    for (auto& v : ck.meta.loss_history) v = r.f32();

    ck.model = ReCoGNet<T>::create(config, 0);
    auto params = ck.model.named_parameters();
    const uint32_t count = r.u32();
    if (count != params.size())
        throw DataError(path + ": checkpoint holds " + std::to_string(count) +
                        " tensors but config expects " + std::to_string(params.size()));
    for (auto& [name, t] : params) {
        const std::string fname = r.str(r.u32());
        if (fname != name)
            throw DataError(path + ": tensor '" + fname + "' where '" + name + "' was expected");
        const uint32_t rank = r.u32();
        Shape shape(rank);
        for (auto& e : shape) e = static_cast<int>(r.u32());
        if (shape != t.shape())
            throw DataError(path + ": tensor '" + name + "' has shape " + shape_str(shape) +
                            ", expected " + shape_str(t.shape()));
        for (auto& v : t.data()) v = static_cast<T>(r.f32());
    }

    r.need(1);
    const bool has_opt = r.bytes[r.pos++] != 0;
    if (has_opt) {
        AdamConfig<T> ac;
        ac.lr = static_cast<T>(r.f64());
        ac.beta1 = static_cast<T>(r.f64());
        ac.beta2 = static_cast<T>(r.f64());
        ac.eps = static_cast<T>(r.f64());
        auto flat = ck.model.parameters();
        AdamState<T> state(flat, ac);
        state.set_step_count(static_cast<int64_t>(r.u64()));
        for (auto& m : state.first_moments())
            for (auto& v : m) v = static_cast<T>(r.f32());
        for (auto& v2 : state.second_moments())
            for (auto& v : v2) v = static_cast<T>(r.f32());
        ck.optimizer = std::move(state);
    }
    return ck;
}

}  // namespace recognet
