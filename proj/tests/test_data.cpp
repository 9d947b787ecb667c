#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "recognet/metaimage.hpp"
#include "recognet/phantom.hpp"
#include "recognet/preprocess.hpp"
#include "recognet/volume.hpp"

using namespace recognet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("recognet_data_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

Volume random_volume(int s, int h, int w, Rng& rng) {
    Volume v;
    v.slices = s;
    v.height = h;
    v.width = w;
    v.voxels.resize(static_cast<size_t>(v.numel()));
    for (auto& x : v.voxels) x = static_cast<float>(rng.uniform(-3, 3));
    return v;
}

}  // namespace

TEST_CASE("native volume round-trips bitwise, spacing included") {
    TempDir dir;
    Rng rng(1);
    Volume v = random_volume(3, 4, 5, rng);
    v.voxels[0] = -0.0f;
    v.voxels[1] = 1e-38f;
    v.spacing = {0.625f, 0.625f, 3.6f};
    v.has_spacing = true;
    const auto path = dir.file("v.rvol");
    write_native(v, path);
    Volume r = read_native_volume(path);
    REQUIRE(r.slices == 3);
    REQUIRE(r.height == 4);
    REQUIRE(r.width == 5);
    CHECK(r.has_spacing);
    CHECK(r.spacing == v.spacing);
    REQUIRE(r.voxels.size() == v.voxels.size());
    CHECK(std::memcmp(r.voxels.data(), v.voxels.data(), v.voxels.size() * 4) == 0);

    // writing the load again reproduces the file byte-for-byte
    const auto path2 = dir.file("v2.rvol");
    write_native(r, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
}

TEST_CASE("native mask round-trips and rejects non-binary payloads") {
    TempDir dir;
    MaskVolume m;
    m.slices = 2;
    m.height = 2;
    m.width = 2;
    m.voxels = {0, 1, 1, 0, 1, 1, 0, 0};
    const auto path = dir.file("m.rvol");
    write_native(m, path);
    auto r = read_native_mask(path);
    CHECK(r.voxels == m.voxels);

    m.voxels[3] = 2;
    CHECK_THROWS_AS(write_native(m, dir.file("bad.rvol")), DataError);

    // tamper a payload byte on disk
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put(char(7));
    f.close();
    CHECK_THROWS_WITH(read_native_mask(path), Catch::Matchers::ContainsSubstring("expected 0 or 1"));
}

TEST_CASE("native reader rejects bad magic, truncation and trailing bytes") {
    TempDir dir;
    write_bytes(dir.file("bad_magic.rvol"), {'X', 'V', 'O', 'L', '1', '\n'});
    CHECK_THROWS_WITH(read_native_volume(dir.file("bad_magic.rvol")),
                      Catch::Matchers::ContainsSubstring("magic"));

    Rng rng(2);
    Volume v = random_volume(2, 2, 2, rng);
    const auto path = dir.file("trunc.rvol");
    write_native(v, path);
    fs::resize_file(path, fs::file_size(path) - 5);
    CHECK_THROWS_WITH(read_native_volume(path), Catch::Matchers::ContainsSubstring("truncated"));

    const auto extra = dir.file("extra.rvol");
    write_native(v, extra);
    std::ofstream(extra, std::ios::app | std::ios::binary) << "x";
    CHECK_THROWS_WITH(read_native_volume(extra), Catch::Matchers::ContainsSubstring("trailing"));

    CHECK_THROWS_AS(read_native_volume(dir.file("missing.rvol")), DataError);
    CHECK_THROWS_AS(write_native(v, (dir.path / "nodir" / "x.rvol").string()), DataError);
}

TEST_CASE("metaimage MET_UCHAR cube decodes in z,y,x order") {
    TempDir dir;
    write_bytes(dir.file("cube.raw"), {0, 1, 2, 3, 4, 5, 6, 7});
    std::ofstream(dir.file("cube.mhd")) << "ObjectType = Image\n"
                                        << "NDims = 3\n"
                                        << "DimSize = 2 2 2\n"
                                        << "ElementSpacing = 1.0 1.0 2.5\n"
                                        << "ElementType = MET_UCHAR\n"
                                        << "ElementDataFile = cube.raw\n";
    Volume v = read_metaimage(dir.file("cube.mhd"));
    REQUIRE(v.slices == 2);
    REQUIRE(v.height == 2);
    REQUIRE(v.width == 2);
    CHECK(v.spacing[2] == 2.5f);
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) CHECK(v.at(z, y, x) == float(z * 4 + y * 2 + x));
}

TEST_CASE("metaimage MET_SHORT honors both byte orders") {
    TempDir dir;
    const std::vector<int16_t> values{-2, 300, 512, -17000, 0, 32767, -32768, 7};
    std::vector<unsigned char> le, be;
    for (int16_t v : values) {
        const auto u = static_cast<uint16_t>(v);
        le.push_back(u & 0xff);
        le.push_back(u >> 8);
        be.push_back(u >> 8);
        be.push_back(u & 0xff);
    }
    write_bytes(dir.file("le.raw"), le);
    write_bytes(dir.file("be.raw"), be);
    std::ofstream(dir.file("le.mhd")) << "ObjectType = Image\nNDims = 3\nDimSize = 2 2 2\n"
                                      << "ElementType = MET_SHORT\n"
                                      << "BinaryDataByteOrderMSB = False\n"
                                      << "ElementDataFile = le.raw\n";
    std::ofstream(dir.file("be.mhd")) << "ObjectType = Image\nNDims = 3\nDimSize = 2 2 2\n"
                                      << "ElementType = MET_SHORT\n"
                                      << "ElementByteOrderMSB = True\n"
                                      << "ElementDataFile = be.raw\n";
    Volume vle = read_metaimage(dir.file("le.mhd"));
    Volume vbe = read_metaimage(dir.file("be.mhd"));
    for (size_t i = 0; i < values.size(); ++i) {
        CHECK(vle.voxels[i] == float(values[i]));
        CHECK(vbe.voxels[i] == float(values[i]));
    }
}

TEST_CASE("metaimage MET_FLOAT decodes and validates payload size") {
    TempDir dir;
    const std::vector<float> values{0.5f, -1.25f, 3e7f, -0.0f, 1e-20f, 42.0f, -7.5f, 0.125f};
    std::vector<unsigned char> bytes;
    for (float f : values) {
        uint32_t u;
        std::memcpy(&u, &f, 4);
        for (int k = 0; k < 4; ++k) bytes.push_back((u >> (8 * k)) & 0xff);
    }
    write_bytes(dir.file("f.raw"), bytes);
    std::ofstream(dir.file("f.mhd")) << "ObjectType = Image\nNDims = 3\nDimSize = 2 2 2\n"
                                     << "ElementType = MET_FLOAT\nElementDataFile = f.raw\n";
    Volume v = read_metaimage(dir.file("f.mhd"));
    for (size_t i = 0; i < values.size(); ++i) CHECK(v.voxels[i] == values[i]);

    // DimSize 4 4 3 with 4-byte floats needs exactly 192 bytes.
    write_bytes(dir.file("short.raw"), std::vector<unsigned char>(191, 0));
    std::ofstream(dir.file("short.mhd")) << "ObjectType = Image\nNDims = 3\nDimSize = 4 4 3\n"
                                         << "ElementType = MET_FLOAT\nElementDataFile = short.raw\n";
    CHECK_THROWS_WITH(read_metaimage(dir.file("short.mhd")),
                      Catch::Matchers::ContainsSubstring("192") &&
                          Catch::Matchers::ContainsSubstring("191"));
}

TEST_CASE("metaimage rejects unknown element types and wrong dimensionality") {
    TempDir dir;
    std::ofstream(dir.file("d.mhd")) << "ObjectType = Image\nNDims = 3\nDimSize = 1 1 1\n"
                                     << "ElementType = MET_DOUBLE\nElementDataFile = d.raw\n";
    CHECK_THROWS_WITH(read_metaimage(dir.file("d.mhd")),
                      Catch::Matchers::ContainsSubstring("MET_DOUBLE"));

    std::ofstream(dir.file("flat.mhd")) << "ObjectType = Image\nNDims = 2\nDimSize = 4 4\n"
                                        << "ElementType = MET_UCHAR\nElementDataFile = flat.raw\n";
    CHECK_THROWS_WITH(read_metaimage(dir.file("flat.mhd")),
                      Catch::Matchers::ContainsSubstring("NDims"));
}

TEST_CASE("metaimage LOCAL payloads and binary masks load") {
    TempDir dir;
    {
        std::ofstream os(dir.file("local.mhd"), std::ios::binary);
        os << "ObjectType = Image\nNDims = 3\nDimSize = 2 1 2\n"
           << "ElementType = MET_UCHAR\nElementDataFile = LOCAL\n";
        const unsigned char payload[4] = {1, 0, 0, 1};
        os.write(reinterpret_cast<const char*>(payload), 4);
    }
    auto mask = read_metaimage_mask(dir.file("local.mhd"));
    CHECK(mask.voxels == std::vector<uint8_t>{1, 0, 0, 1});

    {
        std::ofstream os(dir.file("bad_mask.mhd"), std::ios::binary);
        os << "ObjectType = Image\nNDims = 3\nDimSize = 1 1 1\n"
           << "ElementType = MET_UCHAR\nElementDataFile = LOCAL\n";
        os.put(char(3));
    }
    CHECK_THROWS_WITH(read_metaimage_mask(dir.file("bad_mask.mhd")),
                      Catch::Matchers::ContainsSubstring("expected 0 or 1"));
}

TEST_CASE("manifests resolve relative paths and validate lines") {
    TempDir dir;
    std::ofstream(dir.file("manifest.txt")) << "# comment line\n"
                                            << "case01 img1.rvol mask1.rvol\n"
                                            << "\n"
                                            << "case02 sub/img2.rvol sub/mask2.rvol # trailing\n";
    auto entries = read_manifest(dir.file("manifest.txt"));
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].case_id == "case01");
    CHECK(entries[0].image_path == (dir.path / "img1.rvol").string());
    CHECK(entries[1].mask_path == (dir.path / "sub/mask2.rvol").string());

    std::ofstream(dir.file("bad.txt")) << "case01 only_one_path\n";
    CHECK_THROWS_WITH(read_manifest(dir.file("bad.txt")),
                      Catch::Matchers::ContainsSubstring("caseID imagePath maskPath"));
}

TEST_CASE("seeded case split is reproducible, disjoint and sized") {
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < 50; ++i)
        entries.push_back({"case" + std::to_string(i), "img", "mask"});
    auto [train1, test1] = split_cases(entries, 26, 9);
    auto [train2, test2] = split_cases(entries, 26, 9);
    REQUIRE(train1.size() == 26);
    REQUIRE(test1.size() == 24);
    for (size_t i = 0; i < train1.size(); ++i) CHECK(train1[i].case_id == train2[i].case_id);
    for (const auto& tr : train1)
        for (const auto& te : test1) CHECK(tr.case_id != te.case_id);
    CHECK_THROWS_AS(split_cases(entries, 51, 9), DataError);
}

TEST_CASE("phantoms are deterministic per seed") {
    PhantomSpec spec;
    spec.seed = 1234;
    auto [v1, m1] = generate_phantom(spec);
    auto [v2, m2] = generate_phantom(spec);
    CHECK(v1.voxels == v2.voxels);
    CHECK(m1.voxels == m2.voxels);
    spec.seed = 1235;
    auto [v3, m3] = generate_phantom(spec);
    CHECK(v1.voxels != v3.voxels);
    (void)m3;
}

TEST_CASE("a noise-free full-contrast phantom thresholds to its own mask") {
    PhantomSpec spec;
    spec.seed = 5;
    spec.noise = 0.0f;
    spec.texture = 0.0f;
    spec.background = 0.0f;
    spec.contrast = 1.0f;
    auto [vol, mask] = generate_phantom(spec);
    for (int64_t i = 0; i < vol.numel(); ++i)
        CHECK((vol.voxels[i] > 0.5f) == (mask.voxels[i] == 1));
}

TEST_CASE("phantom rejects degenerate ellipsoids") {
    PhantomSpec spec;
    spec.axis_z_lo = spec.axis_z_hi = 0.0f;
    CHECK_THROWS_WITH(generate_phantom(spec), Catch::Matchers::ContainsSubstring("degenerate"));
}

TEST_CASE("preprocess skips resampling at target size and lands in [0,1]") {
    Rng rng(3);
    Volume v = random_volume(4, 64, 64, rng);
    // resample at identical size must be the identity (no interpolation blur)
    Volume r = resample_volume(v, 64, 64);
    CHECK(r.voxels == v.voxels);

    Volume p = preprocess(v, 64);
    REQUIRE(p.height == 64);
    REQUIRE(p.width == 64);
    for (float x : p.voxels) {
        CHECK(x >= 0.0f);
        CHECK(x <= 1.0f);
    }

    Volume q = preprocess(v, 32);
    CHECK(q.height == 32);
    CHECK(q.width == 32);
    CHECK(q.slices == 4);
}

TEST_CASE("preprocess warns on constant volumes and keeps them constant") {
    Volume v;
    v.slices = 2;
    v.height = v.width = 8;
    v.voxels.assign(128, 3.5f);
    std::string warned;
    // The scale step maps the constant to 0; equalization then sends the
    // single occupied bin to CDF 1, so the pipeline output is constant 1.
    Volume p = preprocess(v, 8, [&](const std::string& msg) { warned = msg; });
    for (float x : p.voxels) CHECK(x == 1.0f);
    CHECK(warned.find("constant") != std::string::npos);
}

TEST_CASE("a two-level slice equalizes to its CDF values") {
    Volume v;
    v.slices = 1;
    v.height = v.width = 8;  // 64 pixels: 16 dark, 48 bright
    v.voxels.assign(64, 0.9f);
    for (int i = 0; i < 16; ++i) v.voxels[i] = 0.1f;
    Volume p = preprocess(v, 8);
    for (int i = 0; i < 64; ++i) {
        if (i < 16)
            CHECK(p.voxels[i] == Catch::Approx(0.25).margin(1e-6));
        else
            CHECK(p.voxels[i] == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("histogram equalization is constant-preserving, monotone, near-identity on ramps") {
    Volume c;
    c.slices = 1;
    c.height = c.width = 4;
    c.voxels.assign(16, 0.3f);
    Volume ce = histogram_equalize(c);
    for (float x : ce.voxels) CHECK(x == 1.0f);

    Rng rng(7);
    Volume r;
    r.slices = 1;
    r.height = r.width = 16;
    r.voxels.resize(256);
    for (auto& x : r.voxels) x = static_cast<float>(rng.uniform(0, 1));
    Volume re = histogram_equalize(r);
    std::vector<int> idx(256);
    for (int i = 0; i < 256; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return r.voxels[a] < r.voxels[b]; });
    for (int i = 1; i < 256; ++i) CHECK(re.voxels[idx[i]] >= re.voxels[idx[i - 1]]);
    for (float x : re.voxels) {
        CHECK(x >= 0.0f);
        CHECK(x <= 1.0f);
    }

    Volume ramp;
    ramp.slices = 1;
    ramp.height = ramp.width = 64;  // 4096 uniform values
    ramp.voxels.resize(4096);
    for (int i = 0; i < 4096; ++i) ramp.voxels[i] = float(i) / 4095.0f;
    Volume rampe = histogram_equalize(ramp);
    float worst = 0;
    for (int i = 0; i < 4096; ++i)
        worst = std::max(worst, std::abs(rampe.voxels[i] - ramp.voxels[i]));
    CHECK(worst <= 1.0f / 256.0f + 1e-5f);
}

TEST_CASE("subsequence sampling is windowed, ordered and uniform") {
    Rng rng(11);
    Volume v;
    v.slices = 20;
    v.height = v.width = 2;
    v.voxels.resize(80);
    for (int s = 0; s < 20; ++s)
        for (int i = 0; i < 4; ++i) v.voxels[s * 4 + i] = float(s);
    MaskVolume m;
    m.slices = 20;
    m.height = m.width = 2;
    m.voxels.assign(80, 0);

    // identity when the volume is no longer than the window
    Volume short_v = v;
    short_v.slices = 10;
    short_v.voxels.resize(40);
    MaskVolume short_m = m;
    short_m.slices = 10;
    short_m.voxels.resize(40);
    auto [same_v, same_m] = sample_subsequence(short_v, short_m, 10, rng);
    CHECK(same_v.voxels == short_v.voxels);

    std::vector<int> counts(11, 0);
    for (int trial = 0; trial < 10000; ++trial) {
        auto [sv, sm] = sample_subsequence(v, m, 10, rng);
        REQUIRE(sv.slices == 10);
        const int start = static_cast<int>(sv.voxels[0]);
        for (int s = 0; s < 10; ++s) REQUIRE(sv.voxels[s * 4] == float(start + s));
        ++counts[start];
    }
    for (int c : counts) CHECK(std::abs(c / 10000.0 - 1.0 / 11.0) <= 0.01);
}

TEST_CASE("contrast corruption touches only the second half, scaling its spread") {
    Rng rng(13);
    Volume v;
    v.slices = 8;
    v.height = v.width = 16;
    v.voxels.resize(v.numel());
    for (auto& x : v.voxels) x = static_cast<float>(rng.uniform(0.2, 0.8));

    Volume same = corrupt_contrast(v, 1.0f);
    CHECK(same.voxels == v.voxels);

    Volume c = corrupt_contrast(v, 0.8f);
    const int64_t plane = 256;
    for (int s = 0; s < 4; ++s)
        CHECK(std::memcmp(c.slice(s), v.slice(s), plane * 4) == 0);
    for (int s = 4; s < 8; ++s) {
        double mean_before = 0, mean_after = 0;
        for (int64_t i = 0; i < plane; ++i) {
            mean_before += v.slice(s)[i];
            mean_after += c.slice(s)[i];
        }
        mean_before /= plane;
        mean_after /= plane;
        CHECK(std::abs(mean_after - mean_before) < 1e-6);
        double var_before = 0, var_after = 0;
        for (int64_t i = 0; i < plane; ++i) {
            var_before += (v.slice(s)[i] - mean_before) * (v.slice(s)[i] - mean_before);
            var_after += (c.slice(s)[i] - mean_after) * (c.slice(s)[i] - mean_after);
        }
        const double ratio = std::sqrt(var_after / var_before);
        CHECK(ratio == Catch::Approx(0.8).margin(1e-6));
    }
}

TEST_CASE("the documented two-point contrast example") {
    Volume v;
    v.slices = 2;
    v.height = 1;
    v.width = 2;
    v.voxels = {0.5f, 0.5f, 0.3f, 0.7f};  // slice 2 carries the example values
    Volume c = corrupt_contrast(v, 0.8f);
    CHECK(c.voxels[0] == 0.5f);
    CHECK(c.voxels[1] == 0.5f);
    CHECK(c.voxels[2] == Catch::Approx(0.34).margin(1e-6));
    CHECK(c.voxels[3] == Catch::Approx(0.66).margin(1e-6));
}
