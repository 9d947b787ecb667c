#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "recognet/errors.hpp"
#include "recognet/rng.hpp"
#include "recognet/tensor.hpp"

namespace recognet {

// An ordered slice sequence of voxel intensities, slices-major ([S][H][W]).
struct Volume {
    int slices = 0, height = 0, width = 0;
    std::vector<float> voxels;
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    bool has_spacing = false;
    std::string case_id;

    int64_t numel() const { return int64_t(slices) * height * width; }
    float& at(int s, int y, int x) { return voxels[(int64_t(s) * height + y) * width + x]; }
    float at(int s, int y, int x) const { return voxels[(int64_t(s) * height + y) * width + x]; }
    const float* slice(int s) const { return voxels.data() + int64_t(s) * height * width; }
    float* slice(int s) { return voxels.data() + int64_t(s) * height * width; }
};

// Binary annotation with the same dimensions as its paired Volume.
struct MaskVolume {
    int slices = 0, height = 0, width = 0;
    std::vector<uint8_t> voxels;  // 0 or 1
    std::string case_id;

    int64_t numel() const { return int64_t(slices) * height * width; }
    uint8_t& at(int s, int y, int x) { return voxels[(int64_t(s) * height + y) * width + x]; }
    uint8_t at(int s, int y, int x) const { return voxels[(int64_t(s) * height + y) * width + x]; }
    const uint8_t* slice(int s) const { return voxels.data() + int64_t(s) * height * width; }
    uint8_t* slice(int s) { return voxels.data() + int64_t(s) * height * width; }
};

inline void require_same_dims(const MaskVolume& m, const Volume& v) {
    if (m.slices != v.slices || m.height != v.height || m.width != v.width)
        throw DataError("mask dims " + std::to_string(m.slices) + "x" + std::to_string(m.height) + "x" +
                        std::to_string(m.width) + " do not match volume " + std::to_string(v.slices) +
                        "x" + std::to_string(v.height) + "x" + std::to_string(v.width));
}

// ---------------------------------------------------------------------------
// Native .rvol container: "RVOL1\n", ASCII header lines, blank line, payload.
// Volumes store little-endian float32, masks one byte per voxel.

namespace detail {

inline void write_f32_le(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    const unsigned char b[4] = {static_cast<unsigned char>(u & 0xff),
                                static_cast<unsigned char>((u >> 8) & 0xff),
                                static_cast<unsigned char>((u >> 16) & 0xff),
                                static_cast<unsigned char>((u >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline float read_f32_le(const unsigned char* b) {
    const uint32_t u = uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
                       (uint32_t(b[3]) << 24);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

inline std::string format_float(float v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

}  // namespace detail

inline void write_native(const Volume& v, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "RVOL1\n";
    os << "dims " << v.slices << ' ' << v.height << ' ' << v.width << '\n';
    os << "kind volume\n";
    if (v.has_spacing)
        os << "spacing " << detail::format_float(v.spacing[0]) << ' '
           << detail::format_float(v.spacing[1]) << ' ' << detail::format_float(v.spacing[2]) << '\n';
    os << '\n';
    for (float x : v.voxels) detail::write_f32_le(os, x);
    if (!os) throw DataError("write failed: " + path);
}

inline void write_native(const MaskVolume& m, const std::string& path) {
    for (uint8_t b : m.voxels)
        if (b > 1) throw DataError("mask contains non-binary voxel value " + std::to_string(int(b)));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "RVOL1\n";
    os << "dims " << m.slices << ' ' << m.height << ' ' << m.width << '\n';
    os << "kind mask\n";
    os << '\n';
    os.write(reinterpret_cast<const char*>(m.voxels.data()),
             static_cast<std::streamsize>(m.voxels.size()));
    if (!os) throw DataError("write failed: " + path);
}

namespace detail {

struct NativeHeader {
    int slices = 0, height = 0, width = 0;
    std::string kind;
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    bool has_spacing = false;
    std::vector<unsigned char> payload;
};

inline NativeHeader read_native_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    std::string magic(6, '\0');
    is.read(magic.data(), 6);
    if (is.gcount() != 6 || magic != "RVOL1\n") throw DataError("bad magic in " + path);

    NativeHeader h;
    std::string line;
    bool have_dims = false;
    while (std::getline(is, line)) {
        if (line.empty()) break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "dims") {
            if (!(ls >> h.slices >> h.height >> h.width) || h.slices < 1 || h.height < 1 || h.width < 1)
                throw DataError("bad dims line in " + path + ": '" + line + "'");
            have_dims = true;
        } else if (key == "kind") {
            ls >> h.kind;
            if (h.kind != "volume" && h.kind != "mask")
                throw DataError("bad kind '" + h.kind + "' in " + path);
        } else if (key == "spacing") {
            if (!(ls >> h.spacing[0] >> h.spacing[1] >> h.spacing[2]))
                throw DataError("bad spacing line in " + path);
            h.has_spacing = true;
        } else {
            throw DataError("unknown header key '" + key + "' in " + path);
        }
    }
    if (!have_dims || h.kind.empty()) throw DataError("incomplete header in " + path);

    const int64_t voxels = int64_t(h.slices) * h.height * h.width;
    const int64_t expect = h.kind == "volume" ? voxels * 4 : voxels;
    h.payload.resize(static_cast<size_t>(expect));
    is.read(reinterpret_cast<char*>(h.payload.data()), expect);
    if (is.gcount() != expect)
        throw DataError("truncated payload in " + path + ": expected " + std::to_string(expect) +
                        " bytes, got " + std::to_string(is.gcount()));
    char extra;
    if (is.read(&extra, 1))
        throw DataError("trailing bytes after payload in " + path);
    return h;
}

}  // namespace detail

inline Volume read_native_volume(const std::string& path) {
    auto h = detail::read_native_raw(path);
    if (h.kind != "volume") throw DataError(path + " holds a mask, expected a volume");
    Volume v;
    v.slices = h.slices;
    v.height = h.height;
    v.width = h.width;
    v.spacing = h.spacing;
    v.has_spacing = h.has_spacing;
    v.voxels.resize(static_cast<size_t>(v.numel()));
    for (int64_t i = 0; i < v.numel(); ++i)
        v.voxels[i] = detail::read_f32_le(h.payload.data() + i * 4);
    v.case_id = std::filesystem::path(path).stem().string();
    return v;
}

inline MaskVolume read_native_mask(const std::string& path) {
    auto h = detail::read_native_raw(path);
    if (h.kind != "mask") throw DataError(path + " holds a volume, expected a mask");
    MaskVolume m;
    m.slices = h.slices;
    m.height = h.height;
    m.width = h.width;
    m.voxels.assign(h.payload.begin(), h.payload.end());
    for (size_t i = 0; i < m.voxels.size(); ++i)
        if (m.voxels[i] > 1)
            throw DataError("mask voxel " + std::to_string(i) + " in " + path + " has value " +
                            std::to_string(int(m.voxels[i])) + ", expected 0 or 1");
    m.case_id = std::filesystem::path(path).stem().string();
    return m;
}

// ---------------------------------------------------------------------------
// Dataset manifest: one "caseID imagePath maskPath" line per case, '#'
// comments. Relative paths resolve against the manifest's directory.

struct ManifestEntry {
    std::string case_id;
    std::string image_path;
    std::string mask_path;
};

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest: " + path);
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return (fp.is_absolute() ? fp : base / fp).string();
    };
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        ManifestEntry e;
        if (!(ls >> e.case_id)) continue;  // blank line
        std::string img, msk;
        if (!(ls >> img >> msk))
            throw DataError("manifest " + path + " line " + std::to_string(lineno) +
                            ": expected 'caseID imagePath maskPath'");
        e.image_path = resolve(img);
        e.mask_path = resolve(msk);
        entries.push_back(std::move(e));
    }
    return entries;
}

inline void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    for (const auto& e : entries) os << e.case_id << ' ' << e.image_path << ' ' << e.mask_path << '\n';
    if (!os) throw DataError("write failed: " + path);
}

// Seeded train/test split over cases, e.g. 26/24 for a 50-case dataset.
inline std::pair<std::vector<ManifestEntry>, std::vector<ManifestEntry>> split_cases(
    std::vector<ManifestEntry> entries, size_t n_train, uint64_t seed) {
    if (n_train > entries.size())
        throw DataError("split_cases: " + std::to_string(n_train) + " training cases requested from " +
                        std::to_string(entries.size()));
    Rng rng(seed);
    rng.shuffle(entries);
    std::vector<ManifestEntry> train(entries.begin(), entries.begin() + n_train);
    std::vector<ManifestEntry> test(entries.begin() + n_train, entries.end());
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Tensor bridges

template <typename T>
Tensor<T> volume_to_tensor(const Volume& v, bool requires_grad = false) {
    std::vector<T> data(v.voxels.begin(), v.voxels.end());
    return Tensor<T>::from_data({v.slices, 1, v.height, v.width}, std::move(data), requires_grad);
}

template <typename T>
Tensor<T> mask_to_tensor(const MaskVolume& m) {
    std::vector<T> data(m.voxels.size());
    for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(m.voxels[i]);
    return Tensor<T>::from_data({m.slices, 1, m.height, m.width}, std::move(data));
}

// Binarize logits: mask = 1 where sigmoid(logit) >= threshold (inclusive).
template <typename T>
MaskVolume predict_masks(const Tensor<T>& logits, double threshold = 0.5) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("predict_masks: threshold must lie in (0,1)");
    if (logits.rank() != 4 || logits.extent(1) != 1)
        throw std::invalid_argument("predict_masks: expected [S,1,H,W] logits, got " +
                                    shape_str(logits.shape()));
    const T cut = static_cast<T>(std::log(threshold / (1.0 - threshold)));
    MaskVolume m;
    m.slices = logits.extent(0);
    m.height = logits.extent(2);
    m.width = logits.extent(3);
    m.voxels.resize(static_cast<size_t>(m.numel()));
    const auto& z = logits.data();
    for (size_t i = 0; i < m.voxels.size(); ++i) m.voxels[i] = z[i] >= cut ? 1 : 0;
    return m;
}

}  // namespace recognet
