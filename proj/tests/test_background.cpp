#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "lidarsim/background.hpp"
#include "lidarsim/errors.hpp"

using namespace lidarsim;
using testutil::TempDir;

namespace {

/// 20 x 20 m ground plane sampled every 0.25 m at z = 0, car id from the
/// standard table.
SemanticPointCloud ground_plane_cloud(bool hole_under_car, bool add_car) {
    SemanticPointCloud cloud;
    cloud.labels_from_file = true;
    const auto car = *cloud.classes.find("car");
    for (int iy = 0; iy <= 80; ++iy) {
        for (int ix = 0; ix <= 80; ++ix) {
            const double x = ix * 0.25;
            const double y = iy * 0.25;
            // shadowed rectangle: no ground was scanned under the car body
            if (hole_under_car && x >= 8.0 && x < 10.0 && y >= 8.0 && y < 9.0) continue;
            cloud.add({x, y, 0.0}, ClassTable::kGround);
        }
    }
    if (add_car) {
        for (int iz = 0; iz < 5; ++iz)
            for (int iy = 0; iy < 4; ++iy)
                for (int ix = 0; ix < 8; ++ix)
                    cloud.add({8.05 + ix * 0.25, 8.05 + iy * 0.25, 0.2 + iz * 0.3}, car);
    }
    return cloud;
}

}  // namespace

TEST_CASE("remove_movable strips labeled obstacles and reports shadows") {
    SemanticPointCloud cloud = ground_plane_cloud(true, true);
    const auto car = *cloud.classes.find("car");
    const std::size_t car_points = 5 * 4 * 8;

    const RemoveMovableResult result =
        remove_movable(cloud, cloud.classes.default_movable(), {});

    CHECK(result.cloud.size() == cloud.size() - car_points);
    REQUIRE(result.removed_per_class.count(car) == 1);
    CHECK(result.removed_per_class.at(car) == car_points);
    for (const auto label : result.cloud.labels) CHECK(label == ClassTable::kGround);

    // the shadowed cells under the car footprint come back as holes
    REQUIRE(!result.holes.cells.empty());
    std::set<std::pair<int, int>> hole_set(result.holes.cells.begin(),
                                           result.holes.cells.end());
    CHECK(hole_set.size() == result.holes.cells.size());
    for (const auto& [hx, hy] : result.holes.cells) {
        const double x = result.holes.origin_x + (hx + 0.5) * result.holes.cell_size;
        const double y = result.holes.origin_y + (hy + 0.5) * result.holes.cell_size;
        CHECK(x > 7.9);
        CHECK(x < 10.1);
        CHECK(y > 7.9);
        CHECK(y < 9.1);
    }
}

TEST_CASE("remove_movable keeps cells where ground survives") {
    // car parked over scanned ground: nothing is shadowed
    SemanticPointCloud cloud = ground_plane_cloud(false, true);
    const RemoveMovableResult result =
        remove_movable(cloud, cloud.classes.default_movable(), {});
    CHECK(result.holes.cells.empty());
}

TEST_CASE("overhanging movables do not punch holes") {
    // movable points floating 10 m above a shadow gap: the ground there was
    // never occluded at scan height, the gap is just unscanned
    SemanticPointCloud cloud = ground_plane_cloud(true, false);
    const auto car = *cloud.classes.find("car");
    for (int ix = 0; ix < 8; ++ix) cloud.add({8.05 + ix * 0.25, 8.3, 10.0}, car);

    RemoveMovableOptions options;
    options.ground_adjacency = 2.0;
    const auto high = remove_movable(cloud, cloud.classes.default_movable(), options);
    CHECK(high.holes.cells.empty());

    // same shape near the ground is a real shadow
    SemanticPointCloud low_cloud = ground_plane_cloud(true, false);
    for (int ix = 0; ix < 8; ++ix) low_cloud.add({8.05 + ix * 0.25, 8.3, 0.2}, car);
    const auto low = remove_movable(low_cloud, low_cloud.classes.default_movable(), options);
    CHECK(!low.holes.cells.empty());
}

TEST_CASE("empty result and validation errors") {
    SemanticPointCloud cloud;
    CHECK_THROWS_AS(remove_movable(cloud, {}, {}), EmptyCloudError);
    cloud.add({0, 0, 0}, 0);
    RemoveMovableOptions bad;
    bad.cell_size = 0.0;
    CHECK_THROWS_AS(remove_movable(cloud, {}, bad), ValidationError);
}

TEST_CASE("ground model percentile estimate") {
    SemanticPointCloud cloud;
    // one cell worth of points with z = 0..99: the 5th percentile lands on
    // rank floor(0.05 * 99) = 4
    for (int i = 0; i < 100; ++i) cloud.add({0.25, 0.25, static_cast<double>(i)},
                                            ClassTable::kGround);
    const GroundModel model = build_ground_model(cloud, 0.5);
    const auto [ix, iy] = model.cell_of(0.25, 0.25);
    CHECK(model.valid(ix, iy));
    CHECK(model.cell_height(ix, iy) == doctest::Approx(4.0));

    SemanticPointCloud none;
    none.add({0, 0, 0}, ClassTable::kUnknown);
    CHECK_THROWS_AS(build_ground_model(none, 0.5), NoGroundPointsError);
}

TEST_CASE("bilinear height interpolation oracle") {
    GroundModel g(0.0, 0.0, 1.0, 3, 3);
    for (int iy = 0; iy < 3; ++iy)
        for (int ix = 0; ix < 3; ++ix) g.set_cell(ix, iy, 1.0 + ix * 0.5 + iy * 0.25);

    CHECK(g.height_at(1.0, 1.0).value() == doctest::Approx(1.375).epsilon(1e-9));
    CHECK(g.height_at(1.75, 2.25).value() == doctest::Approx(2.0625).epsilon(1e-9));
    CHECK(g.height_at(0.5, 0.5).value() == doctest::Approx(1.0));
    CHECK(!g.height_at(-5.0, 0.5).has_value());

    // invalid neighbors renormalize over the valid ones
    GroundModel partial(0.0, 0.0, 1.0, 2, 2);
    partial.set_cell(0, 0, 2.0);
    partial.set_cell(1, 0, 4.0);
    CHECK(partial.height_at(1.0, 1.0).value() == doctest::Approx(3.0));

    GroundModel empty(0.0, 0.0, 1.0, 2, 2);
    CHECK(!empty.height_at(1.0, 1.0).has_value());
}

TEST_CASE("ground raster file round trip") {
    TempDir tmp;
    GroundModel g(-4.0, 2.0, 0.5, 7, 5);
    g.set_cell(0, 0, 1.25);
    g.set_cell(6, 4, -3.5);
    g.set_cell(3, 2, 0.0);
    g.save(tmp / "g.grid");
    const GroundModel back = GroundModel::load(tmp / "g.grid");
    CHECK(back == g);

    testutil::write_text(tmp / "bad.grid", "LSIMGRIDxxxx");
    CHECK_THROWS_AS(GroundModel::load(tmp / "bad.grid"), ParseError);
    testutil::write_text(tmp / "worse.grid", "nope");
    CHECK_THROWS_AS(GroundModel::load(tmp / "worse.grid"), ParseError);
}

TEST_CASE("hole filling resamples ground into shadow cells") {
    SemanticPointCloud cloud = ground_plane_cloud(true, true);
    const auto removal = remove_movable(cloud, cloud.classes.default_movable(), {});
    const GroundModel ground = build_ground_model(removal.cloud, 0.5);

    const std::size_t before = removal.cloud.size();
    const FillHolesResult filled = fill_holes(removal.cloud, ground, removal.holes, 0.25);

    CHECK(filled.unfillable.empty());
    CHECK(filled.points_added > 0);
    CHECK(filled.cloud.size() == before + filled.points_added);
    // 0.5 m cells resampled at 0.25 m spacing: 4 points per hole cell
    CHECK(filled.points_added == removal.holes.cells.size() * 4);

    // pre-existing points are untouched, new ones are ground at plane height
    for (std::size_t i = 0; i < before; ++i) {
        CHECK(filled.cloud.points[i].x == removal.cloud.points[i].x);
        CHECK(filled.cloud.labels[i] == removal.cloud.labels[i]);
    }
    for (std::size_t i = before; i < filled.cloud.size(); ++i) {
        CHECK(filled.cloud.labels[i] == ClassTable::kGround);
        CHECK(std::abs(filled.cloud.points[i].z) < 1e-6);
        CHECK(filled.cloud.points[i].x > 7.9);
        CHECK(filled.cloud.points[i].x < 10.1);
    }
}

TEST_CASE("deep holes fill inward in waves") {
    // a 3 m wide shadow (6 cells across) whose center cells have no valid
    // neighbor in the first pass
    SemanticPointCloud cloud;
    cloud.labels_from_file = true;
    const auto car = *cloud.classes.find("car");
    for (int iy = 0; iy <= 40; ++iy) {
        for (int ix = 0; ix <= 40; ++ix) {
            const double x = ix * 0.25, y = iy * 0.25;
            if (x >= 3.0 && x < 6.0 && y >= 3.0 && y < 6.0) continue;
            cloud.add({x, y, 0.0}, ClassTable::kGround);
        }
    }
    for (int iy = 0; iy < 12; ++iy)
        for (int ix = 0; ix < 12; ++ix)
            cloud.add({3.1 + ix * 0.25, 3.1 + iy * 0.25, 0.3}, car);

    const auto removal = remove_movable(cloud, cloud.classes.default_movable(), {});
    CHECK(removal.holes.cells.size() == 36);
    const GroundModel ground = build_ground_model(removal.cloud, 0.5);
    const auto filled = fill_holes(removal.cloud, ground, removal.holes, 0.25);
    CHECK(filled.unfillable.empty());
    CHECK(filled.points_added == 36 * 4);
    for (std::size_t i = removal.cloud.size(); i < filled.cloud.size(); ++i)
        CHECK(std::abs(filled.cloud.points[i].z) < 1e-6);
}

TEST_CASE("build_background_scene end to end") {
    const SemanticPointCloud cloud = ground_plane_cloud(true, true);
    BackgroundBuildOptions options;
    options.fill_spacing = 0.25;
    const BackgroundScene scene = build_background_scene(cloud, options);

    for (const auto label : scene.cloud.labels)
        CHECK(scene.cloud.classes.default_movable().count(label) == 0);
    CHECK(scene.normals.size() == scene.cloud.size());
    CHECK(scene.index.point_count() == scene.cloud.size());
    CHECK(scene.holes_filled > 0);
    CHECK(scene.holes_unfillable == 0);
    CHECK(scene.ground.height_at(5.0, 5.0).value() == doctest::Approx(0.0).epsilon(1e-6));

    // ground normals face up: the synthetic view origin sits far above
    std::size_t up = 0;
    for (const Vec3& n : scene.normals)
        if (n.z > 0.9) ++up;
    CHECK(up > scene.normals.size() * 9 / 10);
}

TEST_CASE("scene bundle round trip") {
    TempDir tmp;
    const SemanticPointCloud cloud = ground_plane_cloud(true, true);
    BackgroundBuildOptions options;
    options.fill_spacing = 0.25;
    const BackgroundScene scene = build_background_scene(cloud, options);
    save_scene_bundle(scene, tmp / "bundle");

    CHECK(std::filesystem::exists(tmp / "bundle" / "cloud.ply"));
    CHECK(std::filesystem::exists(tmp / "bundle" / "ground.grid"));
    CHECK(std::filesystem::exists(tmp / "bundle" / "scene.json"));

    const BackgroundScene back = load_scene_bundle(tmp / "bundle", options);
    REQUIRE(back.cloud.size() == scene.cloud.size());
    for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
        CHECK(static_cast<float>(scene.cloud.points[i].x) ==
              static_cast<float>(back.cloud.points[i].x));
        CHECK(scene.cloud.labels[i] == back.cloud.labels[i]);
    }
    CHECK(back.ground == scene.ground);
    CHECK(back.removed_per_class == scene.removed_per_class);
    CHECK(back.normals.size() == back.cloud.size());

    CHECK_THROWS_AS(load_scene_bundle(tmp / "nothing", options), IoError);
}
