#include <random>

#include "doctest.h"
#include "fsyn/distance.hpp"
#include "fsyn/volume.hpp"
#include "oracles.hpp"

using namespace fsyn;

namespace {

VoxelGrid random_grid(Shape s, Spacing sp, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 100.0f);
    VoxelGrid v(Geometry(s, sp));
    for (auto &x : v.data()) x = u(rng);
    return v;
}

Affine small_affine(std::mt19937_64 &rng, const Eigen::Vector3d &c) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    for (int r = 0; r < 3; ++r)
        for (int q = 0; q < 3; ++q) m(r, q) += 0.08 * u(rng);
    Affine a = Affine::Identity();
    a.topLeftCorner<3, 3>() = m;
    const Eigen::Vector3d t(u(rng), u(rng), u(rng));
    a.topRightCorner<3, 1>() = c - m * c + t;
    return a;
}

} // namespace

TEST_CASE("geometry validation") {
    CHECK_THROWS_AS(Geometry({0, 1, 1}, {1, 1, 1}).validate(), InvalidArgument);
    CHECK_THROWS_AS(Geometry({1, 1, 1}, {1, -1, 1}).validate(), InvalidArgument);
    Affine singular = Affine::Identity();
    singular(2, 2) = 0.0;
    CHECK_THROWS_AS(Geometry({2, 2, 2}, {1, 1, 1}, singular).validate(), InvalidArgument);
    CHECK_THROWS_AS(VoxelGrid(Geometry({2, 2, 2}, {1, 1, 1}), std::vector<float>(7)), InvalidArgument);
    const Geometry g({3, 4, 5}, {1, 1, 1});
    CHECK(g.index(1, 2, 3) == 1 + 3 * (2 + 4 * 3));
}

TEST_CASE("resample with identical spacing is bit identical") {
    const VoxelGrid v = random_grid({5, 6, 7}, {0.7, 0.7, 1.3}, 1);
    const VoxelGrid r = resample(v, {0.7, 0.7, 1.3});
    CHECK(r.data() == v.data());
    CHECK(r.geometry().same_as(v.geometry(), 0.0));
}

TEST_CASE("resample constant volume") {
    VoxelGrid v(Geometry({5, 4, 3}, {1.0, 1.0, 1.0}), 7.0f);
    for (Spacing sp : {Spacing{0.5, 0.5, 0.5}, Spacing{2.0, 0.3, 1.7}}) {
        const VoxelGrid r = resample(v, sp);
        for (float x : r.data()) CHECK(x == doctest::Approx(7.0).epsilon(1e-6));
    }
}

TEST_CASE("resample ramp matches trilinear oracle") {
    VoxelGrid v(Geometry({4, 4, 4}, {1.0, 1.0, 1.0}));
    for (long k = 0; k < 4; ++k)
        for (long j = 0; j < 4; ++j)
            for (long i = 0; i < 4; ++i) v(i, j, k) = float(10 * i);
    const VoxelGrid r = resample(v, {0.5, 0.5, 0.5});
    REQUIRE(r.shape() == Shape{8, 8, 8});
    for (long k = 0; k < 8; ++k)
        for (long j = 0; j < 8; ++j)
            for (long i = 0; i < 8; ++i) {
                // New voxel centre in old index space: 0.5 * i - 0.25.
                const double expect = oracle::trilinear(v, 0.5 * i - 0.25, 0.5 * j - 0.25, 0.5 * k - 0.25, true);
                CHECK(r(i, j, k) == doctest::Approx(expect).epsilon(1e-6));
            }
    // Voxel centres keep their world position.
    const Eigen::Vector3d w = r.geometry().world(1, 0, 0);
    CHECK(w[0] == doctest::Approx(0.25));
    CHECK(r(1, 0, 0) == doctest::Approx(2.5));
}

TEST_CASE("resample random grid against oracle") {
    const VoxelGrid v = random_grid({5, 4, 6}, {1.0, 1.5, 0.8}, 3);
    const Spacing target{0.6, 1.1, 1.9};
    const VoxelGrid r = resample(v, target);
    for (int d = 0; d < 3; ++d) {
        CHECK(r.shape()[d] == std::int64_t(std::ceil(double(v.shape()[d]) * v.spacing()[d] / target[d])));
        CHECK(r.spacing()[d] == target[d]);
    }
    for (long k = 0; k < r.shape()[2]; ++k)
        for (long j = 0; j < r.shape()[1]; ++j)
            for (long i = 0; i < r.shape()[0]; ++i) {
                // Same world point in both grids.
                const Eigen::Vector4d w = r.affine() * Eigen::Vector4d(i, j, k, 1);
                const Eigen::Vector4d p = v.affine().inverse() * w;
                CHECK(r(i, j, k) == doctest::Approx(oracle::trilinear(v, p[0], p[1], p[2], true)).epsilon(1e-5));
            }
}

TEST_CASE("resample errors and nearest labels") {
    const VoxelGrid v = random_grid({3, 3, 3}, {1, 1, 1}, 4);
    CHECK_THROWS_AS(resample(v, {0.0, 1.0, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(resample(v, {1.0, -1.0, 1.0}), InvalidArgument);

    LabelMap l(Geometry({6, 5, 4}, {1, 1, 1}));
    std::mt19937_64 rng(5);
    for (auto &x : l.data()) x = Label(std::uniform_int_distribution<int>(0, 3)(rng) * 2);
    for (Spacing sp : {Spacing{0.5, 0.5, 0.5}, Spacing{1.7, 0.9, 2.2}}) {
        const LabelMap r = resample(l, sp);
        const auto in = label_set(l), out = label_set(r);
        CHECK(std::includes(in.begin(), in.end(), out.begin(), out.end()));
    }
}

TEST_CASE("crop_pad centring") {
    SUBCASE("identity") {
        const VoxelGrid v = random_grid({6, 6, 6}, {0.5, 0.5, 0.5}, 6);
        CHECK(crop_pad(v, {6, 6, 6}) == v);
    }
    SUBCASE("pad 2 to 4") {
        VoxelGrid v(Geometry({2, 2, 2}, {1, 1, 1}), 1.0f);
        const VoxelGrid p = crop_pad(v, {4, 4, 4}, 0.0f);
        for (long k = 0; k < 4; ++k)
            for (long j = 0; j < 4; ++j)
                for (long i = 0; i < 4; ++i) {
                    const bool inside = i >= 1 && i <= 2 && j >= 1 && j <= 2 && k >= 1 && k <= 2;
                    CHECK(p(i, j, k) == (inside ? 1.0f : 0.0f));
                }
        // Retained voxels keep their world coordinates.
        CHECK((p.geometry().world(1, 1, 1) - v.geometry().world(0, 0, 0)).norm() < 1e-12);
    }
    SUBCASE("crop 6 to 4") {
        const VoxelGrid v = random_grid({6, 6, 6}, {1, 1, 1}, 7);
        const VoxelGrid c = crop_pad(v, {4, 4, 4});
        for (long k = 0; k < 4; ++k)
            for (long j = 0; j < 4; ++j)
                for (long i = 0; i < 4; ++i) CHECK(c(i, j, k) == v(i + 1, j + 1, k + 1));
    }
    SUBCASE("uneven split puts the odd voxel high") {
        VoxelGrid v(Geometry({3, 1, 1}, {1, 1, 1}), 5.0f);
        const VoxelGrid p = crop_pad(v, {4, 1, 1}, -1.0f);
        CHECK(p.data() == std::vector<float>{5, 5, 5, -1});
        VoxelGrid w(Geometry({5, 1, 1}, {1, 1, 1}), std::vector<float>{0, 1, 2, 3, 4});
        CHECK(crop_pad(w, {2, 1, 1}).data() == std::vector<float>{1, 2});
    }
    SUBCASE("round trip") {
        const VoxelGrid v = random_grid({5, 3, 4}, {1, 1, 1}, 8);
        for (Shape big : {Shape{5, 3, 4}, Shape{9, 8, 7}, Shape{6, 4, 11}}) {
            const VoxelGrid back = crop_pad(crop_pad(v, big, 3.0f), v.shape(), 3.0f);
            CHECK(back.data() == v.data());
            CHECK(back.geometry().same_as(v.geometry()));
        }
    }
    CHECK_THROWS_AS(crop_pad(random_grid({2, 2, 2}, {1, 1, 1}, 9), {0, 2, 2}), InvalidArgument);
}

TEST_CASE("warp identity and translation") {
    const VoxelGrid v = random_grid({5, 6, 4}, {0.5, 0.5, 0.5}, 10);
    CHECK(warp(v, Affine::Identity(), nullptr, Interp::Trilinear) == v);
    CHECK(warp(v, Affine::Identity(), nullptr, Interp::Nearest) == v);

    VoxelGrid imp(Geometry({5, 5, 5}, {1, 1, 1}));
    imp(2, 2, 2) = 1.0f;
    Affine t = Affine::Identity();
    t(0, 3) = 1.0;
    const VoxelGrid moved = warp(imp, t, nullptr, Interp::Nearest);
    for (long k = 0; k < 5; ++k)
        for (long j = 0; j < 5; ++j)
            for (long i = 0; i < 5; ++i) CHECK(moved(i, j, k) == ((i == 3 && j == 2 && k == 2) ? 1.0f : 0.0f));

    Affine singular = Affine::Identity();
    singular(1, 1) = 0.0;
    CHECK_THROWS_AS(warp(v, singular, nullptr, Interp::Trilinear), InvalidArgument);
}

TEST_CASE("warp matches per-voxel oracle") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const VoxelGrid v = random_grid({8, 8, 8}, {1.0, 0.8, 1.2}, 100 + trial);
        const Affine a = small_affine(rng, v.geometry().world_center());
        const VoxelGrid w = warp(v, a, nullptr, Interp::Trilinear);
        const VoxelGrid o = oracle::warp_trilinear(v, a);
        for (std::size_t n = 0; n < w.size(); ++n) CHECK(std::abs(w[n] - o[n]) < 1e-4); // float payload
    }
}

TEST_CASE("warp with a displacement field") {
    const VoxelGrid v = random_grid({6, 6, 6}, {1, 1, 1}, 12);
    DisplacementField d(v.geometry());
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<float> u(-0.7f, 0.7f);
    for (auto &x : d.vectors) x = {u(rng), u(rng), u(rng)};
    Affine a = Affine::Identity();
    a(1, 3) = 0.3;
    const VoxelGrid w = warp(v, a, &d, Interp::Trilinear);
    std::size_t n = 0;
    for (long k = 0; k < 6; ++k)
        for (long j = 0; j < 6; ++j)
            for (long i = 0; i < 6; ++i, ++n) {
                const auto p = oracle::warp_source(v.geometry(), v.geometry(), a, i, j, k, d.vectors[n]);
                CHECK(w[n] == doctest::Approx(oracle::trilinear(v, p[0], p[1], p[2], false)).epsilon(1e-5));
            }
}

TEST_CASE("nearest warp never invents labels") {
    std::mt19937_64 rng(14);
    LabelMap l(Geometry({9, 9, 9}, {0.5, 0.5, 0.5}));
    for (auto &x : l.data()) x = Label(std::uniform_int_distribution<int>(1, 3)(rng) * 2);
    for (int trial = 0; trial < 10; ++trial) {
        const LabelMap w = warp(l, small_affine(rng, l.geometry().world_center()), nullptr);
        std::set<Label> allowed = label_set(l);
        allowed.insert(0);
        for (Label x : label_set(w)) CHECK(allowed.contains(x));
    }
}

TEST_CASE("nearest ties go to the lower index") {
    VoxelGrid v(Geometry({4, 1, 1}, {1, 1, 1}), std::vector<float>{1, 2, 3, 4});
    Affine t = Affine::Identity();
    t(0, 3) = 0.5; // output i samples input i - 0.5
    const VoxelGrid w = warp(v, t, nullptr, Interp::Nearest);
    CHECK(w.data() == std::vector<float>{0, 1, 2, 3});
}

TEST_CASE("minmax_normalize") {
    VoxelGrid ramp(Geometry({256, 1, 1}, {1, 1, 1}));
    for (long i = 0; i < 256; ++i) ramp(i, 0, 0) = float(i);
    const VoxelGrid r = minmax_normalize(ramp);
    CHECK(r(0, 0, 0) == 0.0f);
    CHECK(r(255, 0, 0) == 1.0f);
    CHECK(r(51, 0, 0) == doctest::Approx(0.2));

    VoxelGrid c(Geometry({3, 3, 3}, {1, 1, 1}), 4.5f);
    const VoxelGrid cn = minmax_normalize(c);
    for (float x : cn.data()) CHECK(x == 0.0f);

    VoxelGrid s(Geometry({3, 1, 1}, {1, 1, 1}), std::vector<float>{-2, 0, 2});
    CHECK(minmax_normalize(s).data() == std::vector<float>{0, 0.5f, 1});

    const VoxelGrid rnd = minmax_normalize(random_grid({7, 7, 7}, {1, 1, 1}, 15));
    const auto [lo, hi] = std::minmax_element(rnd.data().begin(), rnd.data().end());
    CHECK(*lo == 0.0f);
    CHECK(*hi == 1.0f);
}

TEST_CASE("gaussian blur preserves constants and mass in the interior") {
    VoxelGrid c(Geometry({6, 7, 8}, {1, 1, 1}), 3.0f);
    const VoxelGrid cb = gaussian_blur(c, {1.0, 0.5, 2.0});
    for (float x : cb.data()) CHECK(x == doctest::Approx(3.0).epsilon(1e-6));
    VoxelGrid imp(Geometry({21, 21, 21}, {1, 1, 1}));
    imp(10, 10, 10) = 1.0f;
    const VoxelGrid b = gaussian_blur(imp, {1.0, 1.0, 1.0});
    double sum = 0;
    for (float x : b.data()) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(b(11, 10, 10) == doctest::Approx(b(9, 10, 10)));
    CHECK_THROWS_AS(gaussian_blur(c, {-1, 0, 0}), InvalidArgument);
}

TEST_CASE("control grid upsampling is corner aligned and bounded") {
    VoxelGrid ctrl(Geometry({3, 3, 3}, {1, 1, 1}));
    std::mt19937_64 rng(16);
    for (auto &x : ctrl.data()) x = std::uniform_real_distribution<float>(-1, 1)(rng);
    const Geometry out({9, 5, 7}, {1, 1, 1});
    const VoxelGrid up = upsample_control_grid(ctrl, out);
    CHECK(up(0, 0, 0) == ctrl(0, 0, 0));
    CHECK(up(8, 4, 6) == ctrl(2, 2, 2));
    CHECK(up(4, 2, 3) == doctest::Approx(ctrl(1, 1, 1)));
    const auto [lo, hi] = std::minmax_element(ctrl.data().begin(), ctrl.data().end());
    for (float x : up.data()) {
        CHECK(x >= *lo - 1e-6f);
        CHECK(x <= *hi + 1e-6f);
    }
}

TEST_CASE("label helpers") {
    LabelMap l(Geometry({2, 2, 2}, {1, 1, 1}), std::vector<Label>{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(label_set(l).size() == 8);
    CHECK_NOTHROW(require_labels_in(l, feta_label_set()));
    l[3] = 9;
    CHECK_THROWS_AS(require_labels_in(l, feta_label_set()), InvalidInput);
    CHECK(std::string(tissue_name(kBrainstem)) == "brainstem");

    VoxelGrid f(Geometry({2, 1, 1}, {1, 1, 1}), std::vector<float>{2.4f, 300.0f});
    CHECK_THROWS_AS(to_labels(f), InvalidInput);
    f[1] = 6.6f;
    CHECK(to_labels(f).data() == std::vector<Label>{2, 7});
}

TEST_CASE("distance transform matches brute force") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const Shape s{long(3 + rng() % 7), long(3 + rng() % 7), long(1 + rng() % 7)};
        const Spacing sp{0.3 + 0.1 * double(rng() % 10), 0.5 + 0.1 * double(rng() % 10), 1.0};
        std::vector<unsigned char> f(std::size_t(s[0] * s[1] * s[2]));
        for (auto &x : f) x = (rng() % 9) == 0;
        const auto got = squared_distance_transform(f, s, sp);
        const auto want = oracle::squared_distances(f, s, sp);
        for (std::size_t n = 0; n < f.size(); ++n) {
            if (std::isinf(want[n])) {
                CHECK(std::isinf(got[n]));
            } else {
                CHECK(got[n] == doctest::Approx(want[n]).epsilon(1e-12));
            }
        }
    }
}
