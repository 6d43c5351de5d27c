#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "lidarsim/config.hpp"
#include "lidarsim/errors.hpp"
#include "lidarsim/geometry.hpp"
#include "lidarsim/grid_index.hpp"
#include "lidarsim/mesh.hpp"
#include "lidarsim/normals.hpp"
#include "lidarsim/point_cloud_io.hpp"
#include "lidarsim/rng.hpp"

using namespace lidarsim;
using testutil::TempDir;

TEST_CASE("wrap_angle maps into [-pi, pi)") {
    CHECK(wrap_angle(0.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(wrap_angle(kPi) == doctest::Approx(-kPi));
    CHECK(wrap_angle(-kPi) == doctest::Approx(-kPi));
    CHECK(wrap_angle(3.0 * kPi / 2.0) == doctest::Approx(-kPi / 2.0));
    CHECK(wrap_angle(-3.0 * kPi / 2.0) == doctest::Approx(kPi / 2.0));
    CHECK(wrap_angle(2.0 * kPi) == doctest::Approx(0.0).epsilon(1e-12));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng);
        const double w = wrap_angle(a);
        CHECK(w >= -kPi);
        CHECK(w < kPi);
        CHECK(std::abs(std::remainder(a - w, 2.0 * kPi)) < 1e-9);
    }
}

TEST_CASE("rotation_z and pose algebra") {
    const Mat3 r = Mat3::rotation_z(kPi / 2.0);
    const Vec3 v = r * Vec3{1, 0, 0};
    CHECK(v.x == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(v.y == doctest::Approx(1.0));
    CHECK(r.determinant() == doctest::Approx(1.0));

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int i = 0; i < 100; ++i) {
        const RigidPose p = RigidPose::from_yaw({u(rng), u(rng), u(rng)}, u(rng));
        const RigidPose id = p.inverse().compose(p);
        CHECK(id.translation.norm() < 1e-12);
        CHECK(std::abs(id.yaw) < 1e-12);
        const Vec3 x{u(rng), u(rng), u(rng)};
        const Vec3 back = p.inverse().apply(p.apply(x));
        CHECK((back - x).norm() < 1e-12);
    }
}

TEST_CASE("obb box frame round trip and containment boundary") {
    Obb box;
    box.center = {3.0, -1.0, 0.5};
    box.half_extents = {2.0, 1.0, 0.75};
    box.yaw = 0.7;

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 200; ++i) {
        const Vec3 p{u(rng), u(rng), u(rng)};
        CHECK((box.from_box_frame(box.to_box_frame(p)) - p).norm() < 1e-12);
    }

    // rotation round trips cost a few ulps, so boundary checks get 1e-12 slack
    const Vec3 at_face = box.from_box_frame({2.0, 0.0, 0.0});
    CHECK(box.contains(at_face, 1e-12));
    const Vec3 padded_face = box.from_box_frame({2.1, 0.0, 0.0});
    CHECK(!box.contains(padded_face));
    CHECK(box.contains(padded_face, 0.1 + 1e-12));
    CHECK(!box.contains(padded_face, 0.09));

    // with no rotation the face itself is exactly inside, just beyond is not
    Obb flat;
    flat.half_extents = {2.0, 1.0, 0.75};
    CHECK(flat.contains({2.0, 0.0, 0.0}));
    CHECK(!flat.contains({2.0 + 1e-12, 0.0, 0.0}));

    // footprint is counter-clockwise (positive shoelace area)
    const auto fp = box.footprint();
    double area2 = 0.0;
    for (int i = 0; i < 4; ++i) {
        const Vec3& a = fp[static_cast<std::size_t>(i)];
        const Vec3& b = fp[static_cast<std::size_t>((i + 1) % 4)];
        area2 += a.x * b.y - b.x * a.y;
    }
    CHECK(area2 > 0.0);
    CHECK(area2 / 2.0 == doctest::Approx(4.0 * 2.0));

    const RigidPose pose = RigidPose::from_yaw({1, 2, 3}, 0.4);
    const Obb moved = box.transformed(pose);
    CHECK(moved.yaw == doctest::Approx(wrap_angle(0.7 + 0.4)));
    CHECK((moved.center - pose.apply(box.center)).norm() < 1e-12);
}

TEST_CASE("footprint overlap separating axis") {
    Obb a;
    a.half_extents = {0.5, 0.5, 1.0};
    Obb b = a;
    b.center = {2.0, 0.0, 0.0};

    CHECK(!obb_footprint_overlap(a, b));
    // margin is the required total clearance; the face gap here is 1.0
    CHECK(!obb_footprint_overlap(a, b, 0.9));
    CHECK(obb_footprint_overlap(a, b, 1.0));
    CHECK(obb_footprint_overlap(a, b, 1.1));

    b.center = {0.8, 0.0, 0.0};
    CHECK(obb_footprint_overlap(a, b));

    // rotated: diagonal half-width sqrt(2)/2, so centers 1.2 apart still touch
    b.center = {1.2, 0.0, 0.0};
    b.yaw = kPi / 4.0;
    CHECK(obb_footprint_overlap(a, b));
    b.center = {1.3, 0.0, 0.0};
    CHECK(!obb_footprint_overlap(a, b));

    // z offset is ignored: footprints only
    b = a;
    b.center = {0.0, 0.0, 10.0};
    CHECK(obb_footprint_overlap(a, b));
}

TEST_CASE("splitmix64 and seed derivation reference values") {
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64(42) == 0xbdd732262feb6e95ULL);
    CHECK(splitmix64(0xdeadbeefULL) == 0x4adfb90f68c9eb9bULL);
    CHECK(derive_seed(7, 0) == 0xdb5e8bde378fa476ULL);
    CHECK(derive_seed(7, 3) == 0x320d67738c266110ULL);
    CHECK(derive_seed(7, 0) != derive_seed(7, 1));
    CHECK(derive_seed(7, 0) != derive_seed(8, 0));
}

TEST_CASE("fnv-1a hashing reference values") {
    CHECK(hash_bytes("", 0) == 0xcbf29ce484222325ULL);
    CHECK(hash_bytes("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(hash_bytes("hello world", 11) == 0x779a65e7023cd2e7ULL);

    TempDir tmp;
    testutil::write_text(tmp / "f.txt", "hello world");
    CHECK(hash_file(tmp / "f.txt") == 0x779a65e7023cd2e7ULL);
}

TEST_CASE("key-value config files") {
    TempDir tmp;
    const auto path = tmp / "test.cfg";
    testutil::write_text(path,
                         "testmagic 1\n"
                         "# a comment\n"
                         "name  hello\n"
                         "count 42   # trailing comment\n"
                         "ratio 0.25\n"
                         "flag yes\n"
                         "item a 1\n"
                         "item b 2\n");

    SUBCASE("happy path") {
        KeyValueFile kv = KeyValueFile::parse(path, "testmagic", 1);
        CHECK(kv.get_string("name") == "hello");
        CHECK(kv.get_int("count") == 42);
        CHECK(kv.get_double("ratio") == 0.25);
        CHECK(kv.get_bool("flag"));
        CHECK(kv.get_int_or("missing", 7) == 7);
        const auto items = kv.take_all("item");
        REQUIRE(items.size() == 2);
        CHECK(items[0][0] == "a");
        CHECK(items[1][1] == "2");
        kv.finish();
    }
    SUBCASE("unconsumed keys are an error") {
        KeyValueFile kv = KeyValueFile::parse(path, "testmagic", 1);
        CHECK_THROWS_AS(kv.finish(), ValidationError);
        try {
            KeyValueFile kv2 = KeyValueFile::parse(path, "testmagic", 1);
            kv2.finish();
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("name") != std::string::npos);
        }
    }
    SUBCASE("missing key, wrong types") {
        KeyValueFile kv = KeyValueFile::parse(path, "testmagic", 1);
        CHECK_THROWS_AS(kv.get_string("nope"), ValidationError);
        CHECK_THROWS_AS(kv.get_int("name"), ValidationError);
        CHECK_THROWS_AS(kv.get_bool("ratio"), ValidationError);
    }
    SUBCASE("magic and version are checked") {
        CHECK_THROWS_AS(KeyValueFile::parse(path, "othermagic", 1), ParseError);
        CHECK_THROWS_AS(KeyValueFile::parse(path, "testmagic", 2), ParseError);
        CHECK_THROWS_AS(KeyValueFile::parse(tmp / "absent.cfg", "testmagic", 1), IoError);
    }
}

namespace {

SemanticPointCloud sample_cloud(std::size_t n, bool with_materials) {
    SemanticPointCloud cloud;
    cloud.labels_from_file = true;
    cloud.classes = ClassTable{};
    cloud.classes.ensure("unknown");
    cloud.classes.ensure("ground");
    cloud.classes.ensure("tree");
    const auto pts = testutil::random_f32_points(n, 77);
    std::mt19937_64 rng(78);
    for (std::size_t i = 0; i < n; ++i) {
        cloud.add(pts[i], static_cast<std::uint32_t>(rng() % 3));
        if (with_materials) cloud.materials.push_back(static_cast<std::uint32_t>(rng() % 5));
    }
    return cloud;
}

void check_cloud_equal(const SemanticPointCloud& a, const SemanticPointCloud& b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.points[i].x == b.points[i].x);
        CHECK(a.points[i].y == b.points[i].y);
        CHECK(a.points[i].z == b.points[i].z);
        CHECK(a.labels[i] == b.labels[i]);
    }
    CHECK(a.materials == b.materials);
    CHECK(a.classes == b.classes);
}

}  // namespace

TEST_CASE("point cloud io round trips exactly") {
    TempDir tmp;
    for (const bool with_materials : {false, true}) {
        const SemanticPointCloud cloud = sample_cloud(173, with_materials);
        for (const char* name : {"a.ply", "a.pcd"}) {
            for (const auto encoding : {CloudEncoding::Ascii, CloudEncoding::Binary}) {
                const auto path = tmp / name;
                write_point_cloud(cloud, path, format_from_extension(path), encoding);
                const SemanticPointCloud back = read_point_cloud(path);
                check_cloud_equal(cloud, back);
                CHECK(back.labels_from_file);
            }
        }
    }
}

TEST_CASE("point cloud io rejects bad input") {
    TempDir tmp;
    CHECK_THROWS_AS(format_from_extension(tmp / "a.xyz"), ValidationError);
    CHECK_THROWS_AS(write_point_cloud(SemanticPointCloud{}, tmp / "a.ply", CloudFormat::Ply),
                    EmptyCloudError);
    CHECK_THROWS_AS(read_point_cloud(tmp / "missing.ply"), IoError);

    testutil::write_text(tmp / "bad1.ply", "not a ply\n");
    CHECK_THROWS_AS(read_point_cloud(tmp / "bad1.ply"), ParseError);

    testutil::write_text(tmp / "bad2.ply",
                         "ply\nformat ascii 1.0\nelement vertex 2\n"
                         "property float x\nproperty float y\nproperty float z\n"
                         "end_header\n0 0 0\n");
    CHECK_THROWS_AS(read_point_cloud(tmp / "bad2.ply"), ParseError);
    try {
        read_point_cloud(tmp / "bad2.ply");
    } catch (const ParseError& e) {
        CHECK(e.byte_offset > 0);
    }

    testutil::write_text(tmp / "bad3.ply",
                         "ply\nformat ascii 1.0\nelement vertex 1\n"
                         "property list uchar int vertex_indices\nend_header\n");
    CHECK_THROWS_AS(read_point_cloud(tmp / "bad3.ply"), ParseError);

    testutil::write_text(tmp / "bad4.ply",
                         "ply\nformat ascii 1.0\nelement vertex 1\n"
                         "property float y\nproperty float z\nend_header\n1 2\n");
    CHECK_THROWS_AS(read_point_cloud(tmp / "bad4.ply"), ParseError);

    testutil::write_text(tmp / "bad5.pcd",
                         "# .PCD v0.7\nVERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\n"
                         "TYPE F F F\nCOUNT 1 1 1\nPOINTS 1\nDATA binary_compressed\nxxxx");
    CHECK_THROWS_AS(read_point_cloud(tmp / "bad5.pcd"), ParseError);
}

TEST_CASE("label-free files read as unknown and mark the absence") {
    TempDir tmp;
    testutil::write_text(tmp / "plain.ply",
                         "ply\nformat ascii 1.0\nelement vertex 2\n"
                         "property float x\nproperty float y\nproperty float z\n"
                         "end_header\n1 2 3\n4 5 6\n");
    const SemanticPointCloud cloud = read_point_cloud(tmp / "plain.ply");
    REQUIRE(cloud.size() == 2);
    CHECK(!cloud.labels_from_file);
    CHECK(cloud.labels[0] == ClassTable::kUnknown);
    CHECK(cloud.points[1].x == 4.0f);
}

TEST_CASE("class table comments override the standard registry") {
    TempDir tmp;
    testutil::write_text(tmp / "t.ply",
                         "ply\nformat ascii 1.0\ncomment class 0 void\ncomment class 1 road\n"
                         "element vertex 1\nproperty float x\nproperty float y\n"
                         "property float z\nproperty uint label\nend_header\n1 2 3 1\n");
    const SemanticPointCloud cloud = read_point_cloud(tmp / "t.ply");
    CHECK(cloud.classes.names == std::vector<std::string>{"void", "road"});
    CHECK(cloud.labels[0] == 1);
}

TEST_CASE("box mesh construction") {
    const TriangleMesh box = make_box_mesh({-1, -2, 0}, {1, 2, 3});
    CHECK(box.vertices.size() == 8);
    CHECK(box.triangle_count() == 12);
    box.validate();
    const Aabb b = box.bounds();
    CHECK(b.min.x == -1.0);
    CHECK(b.max.z == 3.0);

    // all normals point away from the box center
    const Vec3 center = b.center();
    double total_area = 0.0;
    for (std::size_t t = 0; t < box.triangle_count(); ++t) {
        const auto& tri = box.triangles[t];
        const Vec3 centroid =
            (box.vertices[tri[0]] + box.vertices[tri[1]] + box.vertices[tri[2]]) / 3.0;
        CHECK(box.triangle_normal(t).dot(centroid - center) > 0.0);
        total_area += box.triangle_area(t);
    }
    CHECK(total_area == doctest::Approx(2 * (2 * 4 + 2 * 3 + 4 * 3)));
}

TEST_CASE("mesh transform and degenerate removal") {
    TriangleMesh mesh = make_box_mesh({0, 0, 0}, {1, 1, 1});
    const double area_before = [&] {
        double a = 0.0;
        for (std::size_t t = 0; t < mesh.triangle_count(); ++t) a += mesh.triangle_area(t);
        return a;
    }();
    const TriangleMesh moved = mesh.transformed(RigidPose::from_yaw({5, 6, 7}, 1.1));
    double area_after = 0.0;
    for (std::size_t t = 0; t < moved.triangle_count(); ++t)
        area_after += moved.triangle_area(t);
    CHECK(area_after == doctest::Approx(area_before));

    mesh.triangles.push_back({0, 0, 1});
    mesh.tri_materials.push_back(0);
    CHECK(mesh.remove_degenerate() == 1);
    CHECK(mesh.triangle_count() == 12);
}

TEST_CASE("obj loader") {
    TempDir tmp;
    SUBCASE("quads fan out, negative and slash indices work") {
        testutil::write_text(tmp / "quad.obj",
                             "# comment\n"
                             "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                             "f 1 2 3 4\n"
                             "f -4//1 -3/2/1 -2\n");
        const TriangleMesh mesh = load_obj(tmp / "quad.obj");
        CHECK(mesh.vertices.size() == 4);
        CHECK(mesh.triangle_count() == 3);
        mesh.validate();
    }
    SUBCASE("glass material groups are transparent") {
        testutil::write_text(tmp / "win.obj",
                             "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n"
                             "usemtl body\nf 1 2 3\n"
                             "usemtl front_glass\nf 1 2 4\n");
        Material base;
        base.reflectivity = 0.6;
        const TriangleMesh mesh = load_obj(tmp / "win.obj", base);
        // slot 0 stays the implicit base group even when no face uses it
        REQUIRE(mesh.materials.size() == 3);
        CHECK(!mesh.materials[1].transparent);
        CHECK(mesh.materials[2].transparent);
        CHECK(mesh.materials[1].reflectivity == 0.6);
        CHECK(mesh.materials[2].reflectivity == 0.6);
        CHECK(mesh.material_names[1] == "body");
        CHECK(mesh.material_names[2] == "front_glass");
        CHECK(mesh.tri_materials == std::vector<std::uint32_t>{1, 2});
    }
    SUBCASE("degenerate faces are dropped and counted") {
        testutil::write_text(tmp / "degen.obj",
                             "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
                             "f 1 2 3\nf 1 1 2\n");
        ObjLoadStats stats;
        const TriangleMesh mesh = load_obj(tmp / "degen.obj", Material{}, &stats);
        CHECK(mesh.triangle_count() == 1);
        CHECK(stats.degenerate_dropped == 1);
    }
    SUBCASE("errors") {
        testutil::write_text(tmp / "none.obj", "v 0 0 0\n");
        CHECK_THROWS_AS(load_obj(tmp / "none.obj"), ParseError);
        testutil::write_text(tmp / "badidx.obj", "v 0 0 0\nf 1 2 9\n");
        CHECK_THROWS_AS(load_obj(tmp / "badidx.obj"), ParseError);
        CHECK_THROWS_AS(load_obj(tmp / "missing.obj"), IoError);
    }
    SUBCASE("save round trip") {
        TriangleMesh mesh = make_box_mesh({0, 0, 0}, {2, 1, 1});
        mesh.materials.push_back(Material{0.4, true});
        mesh.material_names.assign({"body", "glass_top"});
        mesh.tri_materials[3] = 1;
        save_obj(mesh, tmp / "rt.obj");
        const TriangleMesh back = load_obj(tmp / "rt.obj");
        CHECK(back.triangle_count() == mesh.triangle_count());
        CHECK(back.vertices.size() == mesh.vertices.size());
        // implicit base slot plus the two named groups; transparency comes
        // back through the group name alone
        REQUIRE(back.materials.size() == 3);
        CHECK(!back.materials[1].transparent);
        CHECK(back.materials[2].transparent);
        CHECK(back.material_names[2] == "glass_top");
        const Aabb ba = back.bounds();
        CHECK(ba.max.x == doctest::Approx(2.0));
    }
}

TEST_CASE("grid index agrees with brute force") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::vector<Vec3> pts;
    for (int i = 0; i < 500; ++i) pts.push_back({u(rng), u(rng), u(rng)});
    const SpatialGridIndex index(pts, 0.8);
    CHECK(index.point_count() == 500);

    std::uniform_real_distribution<double> ur(0.3, 3.0);
    for (int q = 0; q < 50; ++q) {
        const Vec3 center{u(rng), u(rng), u(rng)};
        const double radius = ur(rng);
        auto got = index.query(center, radius);
        auto want = testutil::brute_force_radius(pts, center, radius);
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        CHECK(got == want);
    }
}

TEST_CASE("normal estimation") {
    SUBCASE("plane points get the plane normal, oriented to the viewer") {
        std::vector<Vec3> pts;
        for (int x = 0; x < 20; ++x)
            for (int y = 0; y < 20; ++y) pts.push_back({x * 0.1, y * 0.1, 0.0});
        const SpatialGridIndex index(pts, 0.3);
        const Vec3 view{1.0, 1.0, 5.0};
        const auto normals = estimate_point_normals(pts, index, 0.35, view);
        REQUIRE(normals.size() == pts.size());
        for (const Vec3& n : normals) {
            CHECK(n.norm() == doctest::Approx(1.0));
            CHECK(n.z > 0.999);
        }
    }
    SUBCASE("sphere points get radial normals") {
        std::mt19937_64 rng(13);
        std::vector<Vec3> pts;
        for (int i = 0; i < 4000; ++i) pts.push_back(testutil::random_unit(rng) * 5.0);
        const SpatialGridIndex index(pts, 0.5);
        const auto normals = estimate_point_normals(pts, index, 0.55, {0, 0, 20.0});
        std::size_t radial = 0;
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (std::abs(normals[i].dot(pts[i].normalized())) > 0.98) ++radial;
        CHECK(radial > pts.size() * 95 / 100);
    }
    SUBCASE("isolated points fall back to the view direction") {
        const std::vector<Vec3> pts{{10, 0, 0}, {-10, 0, 0}};
        const SpatialGridIndex index(pts, 1.0);
        const auto normals = estimate_point_normals(pts, index, 0.5, {0, 0, 0});
        CHECK((normals[0] - Vec3{-1, 0, 0}).norm() < 1e-12);
        CHECK((normals[1] - Vec3{1, 0, 0}).norm() < 1e-12);
    }
}

TEST_CASE("transform_points matches pose application") {
    const RigidPose pose = RigidPose::from_yaw({1, -2, 0.5}, 0.9);
    const auto pts = testutil::random_f32_points(50, 3);
    const auto out = transform_points(pts, pose);
    REQUIRE(out.size() == pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        CHECK((out[i] - pose.apply(pts[i])).norm() < 1e-12);
}
