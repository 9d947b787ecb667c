#pragma once

#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "recognet/volume.hpp"

namespace recognet {

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline bool meta_bool(const std::string& v) {
    return v == "True" || v == "true" || v == "TRUE" || v == "1";
}

}  // namespace detail

// Reader for the MetaImage format: an ASCII key=value header (.mhd) plus a
// raw voxel payload, either in a separate file or following the header
// (ElementDataFile = LOCAL). Supports MET_UCHAR, MET_SHORT and MET_FLOAT in
// either byte order; voxels are returned in stored z,y,x order.
inline Volume read_metaimage(const std::string& header_path) {
    std::ifstream is(header_path, std::ios::binary);
    if (!is) throw DataError("cannot open MetaImage header: " + header_path);

    int ndims = -1;
    std::vector<int> dim_size;
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    bool has_spacing = false;
    std::string element_type;
    bool big_endian = false;
    std::string data_file;
    std::streampos payload_start{-1};

    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key == "ObjectType") {
            if (val != "Image") throw DataError(header_path + ": ObjectType '" + val + "' is not Image");
        } else if (key == "NDims") {
            ndims = std::stoi(val);
        } else if (key == "DimSize") {
            std::istringstream ds(val);
            int d;
            while (ds >> d) dim_size.push_back(d);
        } else if (key == "ElementSpacing") {
            std::istringstream sp(val);
            sp >> spacing[0] >> spacing[1] >> spacing[2];
            has_spacing = true;
        } else if (key == "ElementType") {
            element_type = val;
        } else if (key == "ElementByteOrderMSB" || key == "BinaryDataByteOrderMSB") {
            big_endian = detail::meta_bool(val);
        } else if (key == "ElementDataFile") {
            data_file = val;
            if (data_file == "LOCAL") payload_start = is.tellg();
            break;  // ElementDataFile is last by convention
        }
        // Other keys (CompressedData=False, TransformMatrix, Offset, ...) are ignored.
    }

    if (ndims != 3)
        throw DataError(header_path + ": NDims is " + std::to_string(ndims) + ", only 3 supported");
    if (dim_size.size() != 3)
        throw DataError(header_path + ": DimSize has " + std::to_string(dim_size.size()) +
                        " entries, expected 3");
    if (data_file.empty()) throw DataError(header_path + ": missing ElementDataFile");

    int elem_bytes;
    if (element_type == "MET_UCHAR")
        elem_bytes = 1;
    else if (element_type == "MET_SHORT")
        elem_bytes = 2;
    else if (element_type == "MET_FLOAT")
        elem_bytes = 4;
    else
        throw DataError(header_path + ": unsupported ElementType '" + element_type + "'");

    // DimSize is x y z (fastest first); our layout is [S=z][H=y][W=x].
    const int w = dim_size[0], h = dim_size[1], s = dim_size[2];
    const int64_t voxels = int64_t(w) * h * s;
    const int64_t expect = voxels * elem_bytes;

    std::vector<unsigned char> payload(static_cast<size_t>(expect));
    if (data_file == "LOCAL") {
        is.seekg(payload_start);
        is.read(reinterpret_cast<char*>(payload.data()), expect);
        if (is.gcount() != expect)
            throw DataError(header_path + ": LOCAL payload has " + std::to_string(is.gcount()) +
                            " bytes, expected " + std::to_string(expect));
    } else {
        std::filesystem::path dp(data_file);
        if (!dp.is_absolute()) dp = std::filesystem::path(header_path).parent_path() / dp;
        std::ifstream ds(dp, std::ios::binary);
        if (!ds) throw DataError("cannot open ElementDataFile: " + dp.string());
        ds.seekg(0, std::ios::end);
        const int64_t actual = ds.tellg();
        if (actual != expect)
            throw DataError(dp.string() + ": payload is " + std::to_string(actual) +
                            " bytes but DimSize implies " + std::to_string(expect));
        ds.seekg(0);
        ds.read(reinterpret_cast<char*>(payload.data()), expect);
        if (ds.gcount() != expect) throw DataError("short read from " + dp.string());
    }

    Volume v;
    v.slices = s;
    v.height = h;
    v.width = w;
    v.spacing = spacing;
    v.has_spacing = has_spacing;
    v.case_id = std::filesystem::path(header_path).stem().string();
    v.voxels.resize(static_cast<size_t>(voxels));

    const unsigned char* p = payload.data();
    if (element_type == "MET_UCHAR") {
        for (int64_t i = 0; i < voxels; ++i) v.voxels[i] = static_cast<float>(p[i]);
    } else if (element_type == "MET_SHORT") {
        for (int64_t i = 0; i < voxels; ++i) {
            const uint16_t u = big_endian ? uint16_t((p[2 * i] << 8) | p[2 * i + 1])
                                          : uint16_t(p[2 * i] | (p[2 * i + 1] << 8));
            int16_t sv;
            std::memcpy(&sv, &u, 2);
            v.voxels[i] = static_cast<float>(sv);
        }
    } else {
        for (int64_t i = 0; i < voxels; ++i) {
            uint32_t u;
            if (big_endian)
                u = (uint32_t(p[4 * i]) << 24) | (uint32_t(p[4 * i + 1]) << 16) |
                    (uint32_t(p[4 * i + 2]) << 8) | uint32_t(p[4 * i + 3]);
            else
                u = uint32_t(p[4 * i]) | (uint32_t(p[4 * i + 1]) << 8) |
                    (uint32_t(p[4 * i + 2]) << 16) | (uint32_t(p[4 * i + 3]) << 24);
            float f;
            std::memcpy(&f, &u, 4);
            v.voxels[i] = f;
        }
    }
    return v;
}

inline MaskVolume read_metaimage_mask(const std::string& header_path) {
    const Volume v = read_metaimage(header_path);
    MaskVolume m;
    m.slices = v.slices;
    m.height = v.height;
    m.width = v.width;
    m.case_id = v.case_id;
    m.voxels.resize(static_cast<size_t>(v.numel()));
    for (int64_t i = 0; i < v.numel(); ++i) {
        const float x = v.voxels[i];
        if (x == 0.0f)
            m.voxels[i] = 0;
        else if (x == 1.0f)
            m.voxels[i] = 1;
        else
            throw DataError(header_path + ": mask voxel " + std::to_string(i) + " has value " +
                            std::to_string(x) + ", expected 0 or 1");
    }
    return m;
}

// Extension-dispatching loaders used by manifests.
inline bool is_metaimage_path(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    return ext == ".mhd" || ext == ".mha";
}

inline Volume load_volume(const std::string& path) {
    if (is_metaimage_path(path)) return read_metaimage(path);
    if (std::filesystem::path(path).extension() == ".rvol") return read_native_volume(path);
    throw DataError("unknown volume format: " + path);
}

inline MaskVolume load_mask(const std::string& path) {
    if (is_metaimage_path(path)) return read_metaimage_mask(path);
    if (std::filesystem::path(path).extension() == ".rvol") return read_native_mask(path);
    throw DataError("unknown mask format: " + path);
}

}  // namespace recognet
