#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <zlib.h>

#include "doctest.h"
#include "fsyn/nifti.hpp"

using namespace fsyn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fsyn_nifti_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

template <class T>
void put(std::string &b, std::size_t off, T v) {
    std::memcpy(b.data() + off, &v, sizeof(T));
}

/// Minimal single-file NIfTI-1 header laid out by hand from the format
/// description, followed by `payload`.
std::string raw_file(std::int16_t datatype, std::int16_t bitpix, std::array<std::int16_t, 3> dim,
                     const std::string &payload, float slope = 0.0f, float inter = 0.0f) {
    std::string b(352, '\0');
    put<std::int32_t>(b, 0, 348);
    put<std::int16_t>(b, 40, 3);
    for (int d = 0; d < 3; ++d) put<std::int16_t>(b, 42 + 2 * d, dim[d]);
    for (int d = 3; d < 8; ++d) put<std::int16_t>(b, 42 + 2 * d, 1);
    put<std::int16_t>(b, 70, datatype);
    put<std::int16_t>(b, 72, bitpix);
    put<float>(b, 76, 1.0f);
    for (int d = 1; d < 4; ++d) put<float>(b, 76 + 4 * d, 0.5f * float(d));
    put<float>(b, 108, 352.0f);
    put<float>(b, 112, slope);
    put<float>(b, 116, inter);
    std::memcpy(b.data() + 344, "n+1\0", 4);
    return b + payload;
}

std::string bytes_of(const std::vector<std::int16_t> &v) {
    return std::string(reinterpret_cast<const char *>(v.data()), v.size() * sizeof(std::int16_t));
}

std::string slurp(const fs::path &p) {
    gzFile f = gzopen(p.string().c_str(), "rb");
    std::string out;
    char buf[4096];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, std::size_t(n));
    gzclose(f);
    return out;
}

VoxelGrid random_volume(std::mt19937_64 &rng) {
    std::uniform_int_distribution<int> dim(1, 9);
    std::uniform_real_distribution<double> sp(0.2, 3.0);
    // pixdim is float32 on disk, so spacings are drawn at that precision.
    Geometry g({dim(rng), dim(rng), dim(rng)}, {double(float(sp(rng))), double(float(sp(rng))), double(float(sp(rng)))});
    VoxelGrid v(g);
    std::uniform_real_distribution<float> val(-1e4f, 1e4f);
    for (auto &x : v.data()) x = val(rng);
    return v;
}

} // namespace

TEST_CASE("image round trip is bit exact") {
    TempDir tmp;
    std::mt19937_64 rng(1);
    for (const char *name : {"a.nii", "a.nii.gz"}) {
        VoxelGrid v = random_volume(rng);
        v[0] = -0.0f;
        v[v.size() - 1] = std::numeric_limits<float>::denorm_min();
        write_nifti(v, tmp.path / name);
        NiftiMeta meta;
        const VoxelGrid r = read_nifti(tmp.path / name, &meta);
        CHECK(meta.datatype == nifti_dt::kFloat32);
        CHECK(r.shape() == v.shape());
        CHECK(r.spacing() == v.spacing());
        REQUIRE(r.size() == v.size());
        CHECK(std::memcmp(r.data().data(), v.data().data(), v.size() * sizeof(float)) == 0);
        CHECK((r.affine() - v.affine()).cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("rotated affine survives both sform and qform") {
    TempDir tmp;
    Affine a = Affine::Identity();
    const double t = 0.3;
    Eigen::Matrix3d rot;
    rot << std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t), 0, 0, 0, 1;
    a.topLeftCorner<3, 3>() = rot * Eigen::Vector3d(0.5, 0.7, 1.1).asDiagonal();
    a.topRightCorner<3, 1>() = Eigen::Vector3d(-12.0, 4.5, 30.25);
    VoxelGrid v(Geometry({3, 4, 5}, {0.5, 0.7, 1.1}, a), 2.0f);
    write_nifti(v, tmp.path / "r.nii.gz");
    NiftiMeta meta;
    const VoxelGrid r = read_nifti(tmp.path / "r.nii.gz", &meta);
    CHECK(meta.sform_code > 0);
    CHECK(meta.qform_code > 0);
    CHECK((meta.sform - a).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((meta.qform - a).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((r.affine() - a).cwiseAbs().maxCoeff() < 1e-5);

    // Reflection: qfac carries the sign.
    Affine f = Affine::Identity();
    f(0, 0) = -0.8;
    VoxelGrid w(Geometry({2, 2, 2}, {0.8, 1, 1}, f), 1.0f);
    write_nifti(w, tmp.path / "f.nii");
    read_nifti(tmp.path / "f.nii", &meta);
    CHECK((meta.qform - f).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("labels are stored as uint8 and round trip") {
    TempDir tmp;
    LabelMap l(Geometry({4, 3, 2}, {0.5, 0.5, 0.5}));
    for (std::size_t n = 0; n < l.size(); ++n) l[n] = Label(n % 8);
    write_nifti(l, tmp.path / "l.nii.gz");
    NiftiMeta meta;
    const LabelMap r = read_nifti_labels(tmp.path / "l.nii.gz", &meta);
    CHECK(meta.datatype == nifti_dt::kUint8);
    CHECK(r.data() == l.data());

    VoxelGrid f = to_float(l);
    write_nifti(f, tmp.path / "f.nii", true);
    read_nifti(tmp.path / "f.nii", &meta);
    CHECK(meta.datatype == nifti_dt::kUint8);
}

TEST_CASE("scaling is applied") {
    const std::string file = raw_file(nifti_dt::kInt16, 16, {1, 1, 1}, bytes_of({3}), 2.0f, 1.0f);
    const VoxelGrid v = decode_nifti(file);
    CHECK(v[0] == 7.0f);
    // slope 0 means no scaling
    CHECK(decode_nifti(raw_file(nifti_dt::kInt16, 16, {1, 1, 1}, bytes_of({3}), 0.0f, 5.0f))[0] == 3.0f);
}

TEST_CASE("pixdim spacing is used without sform or qform") {
    const VoxelGrid v = decode_nifti(raw_file(nifti_dt::kInt16, 16, {2, 1, 1}, bytes_of({1, 2})));
    CHECK(v.spacing() == Spacing{0.5, 1.0, 1.5});
    CHECK(v.affine()(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("byte swapped files decode") {
    std::string file = raw_file(nifti_dt::kInt16, 16, {2, 1, 1}, bytes_of({0x0102, 0x0304}));
    auto swap_at = [&](std::size_t off, std::size_t width) {
        std::reverse(file.begin() + long(off), file.begin() + long(off + width));
    };
    swap_at(0, 4);
    for (int d = 0; d < 8; ++d) swap_at(40 + 2 * d, 2);
    swap_at(70, 2);
    swap_at(72, 2);
    for (int d = 0; d < 8; ++d) swap_at(76 + 4 * d, 4);
    swap_at(108, 4);
    swap_at(352, 2);
    swap_at(354, 2);
    NiftiMeta meta;
    const VoxelGrid v = decode_nifti(file, &meta);
    CHECK(meta.byte_swapped);
    CHECK(v[0] == float(0x0102));
    CHECK(v[1] == float(0x0304));
    CHECK(v.spacing()[0] == 0.5);
}

TEST_CASE("parse errors name the field") {
    auto field_of = [](const std::string &bytes) {
        try {
            decode_nifti(bytes);
        } catch (const NiftiParseError &e) {
            return e.field();
        }
        return std::string("none");
    };
    const std::string good = raw_file(nifti_dt::kInt16, 16, {2, 2, 1}, bytes_of({1, 2, 3, 4}));
    CHECK(field_of(good) == "none");
    CHECK(field_of(good.substr(0, 200)) == "sizeof_hdr");

    std::string bad_magic = good;
    bad_magic[345] = 'x';
    CHECK(field_of(bad_magic) == "magic");

    std::string bad_type = good;
    put<std::int16_t>(bad_type, 70, 1536); // float128
    CHECK(field_of(bad_type) == "datatype");

    std::string bad_dim = good;
    put<std::int16_t>(bad_dim, 42, 0);
    CHECK(field_of(bad_dim) == "dim");

    CHECK(field_of(good.substr(0, good.size() - 2)) == "payload");
}

TEST_CASE("I/O errors carry the path") {
    TempDir tmp;
    const fs::path missing = tmp.path / "nope" / "x.nii.gz";
    try {
        write_nifti(VoxelGrid(Geometry({1, 1, 1}, {1, 1, 1})), missing);
        FAIL("expected an error");
    } catch (const NiftiIoError &e) {
        CHECK(std::string(e.what()).find(missing.string()) != std::string::npos);
    }
    try {
        read_nifti(tmp.path / "absent.nii");
        FAIL("expected an error");
    } catch (const NiftiIoError &e) {
        CHECK(std::string(e.what()).find("absent.nii") != std::string::npos);
    }
}

TEST_CASE("written header fields") {
    TempDir tmp;
    write_nifti(VoxelGrid(Geometry({2, 3, 4}, {0.5, 0.5, 0.5}), 1.0f), tmp.path / "h.nii.gz");
    const std::string b = slurp(tmp.path / "h.nii.gz");
    REQUIRE(b.size() == 352 + 24 * 4);
    std::int32_t hdr;
    float off, slope;
    std::memcpy(&hdr, b.data(), 4);
    std::memcpy(&off, b.data() + 108, 4);
    std::memcpy(&slope, b.data() + 112, 4);
    CHECK(hdr == 348);
    CHECK(off == 352.0f);
    CHECK(slope == 1.0f);
    CHECK(std::memcmp(b.data() + 344, "n+1\0", 4) == 0);
}

TEST_CASE("path helpers") {
    CHECK(is_nifti_path("x/sub-01_T2w.nii.gz"));
    CHECK(is_nifti_path("a.nii"));
    CHECK_FALSE(is_nifti_path("a.gz"));
    CHECK(nifti_stem("x/sub-01_T2w.nii.gz") == "sub-01_T2w");
    CHECK(nifti_stem("b.nii") == "b");
}
