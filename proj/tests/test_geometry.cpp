#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "splatsim/error.hpp"
#include "splatsim/geometry.hpp"
#include "splatsim/mesh.hpp"
#include "splatsim/random.hpp"
#include "splatsim/spatial.hpp"
#include "splatsim/splat.hpp"

using namespace splatsim;

namespace {

RigidTransform random_transform(Rng& rng, double max_t = 1.0) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  return RigidTransform::from_axis_angle(
      axis, rng.uniform(-std::numbers::pi, std::numbers::pi),
      Vec3(rng.uniform(-max_t, max_t), rng.uniform(-max_t, max_t),
           rng.uniform(-max_t, max_t)));
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("splatsim_" + name);
}

void write_ply(const std::filesystem::path& path,
               const std::vector<std::string>& props,
               const std::vector<std::vector<float>>& rows) {
  std::ofstream f(path, std::ios::binary);
  f << "ply\nformat binary_little_endian 1.0\nelement vertex " << rows.size()
    << "\n";
  for (const auto& p : props) f << "property float " << p << "\n";
  f << "end_header\n";
  for (const auto& r : rows) {
    f.write(reinterpret_cast<const char*>(r.data()),
            static_cast<std::streamsize>(r.size() * sizeof(float)));
  }
}

const std::vector<std::string> kPlyProps = {
    "x",       "y",       "z",       "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
    "scale_0", "scale_1", "scale_2", "rot_0",  "rot_1",  "rot_2",  "rot_3"};

}  // namespace

TEST(RigidTransform, CompositionMatchesSequentialApply) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const RigidTransform a = random_transform(rng);
    const RigidTransform b = random_transform(rng);
    const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    EXPECT_LT(((a * b).apply(p) - a.apply(b.apply(p))).norm(), 1e-12);
  }
}

TEST(RigidTransform, CompositionIsAssociative) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto a = random_transform(rng), b = random_transform(rng),
               c = random_transform(rng);
    const auto l = (a * b) * c, r = a * (b * c);
    EXPECT_LT(rotation_distance(l, r), 1e-12);
    EXPECT_LT(translation_distance(l, r), 1e-12);
  }
}

TEST(RigidTransform, InverseGivesIdentity) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto a = random_transform(rng);
    const auto id = a.inverse() * a;
    EXPECT_LT(id.angle(), 1e-12);
    EXPECT_LT(id.translation.norm(), 1e-12);
    EXPECT_NEAR(id.rotation.norm(), 1.0, 1e-9);
  }
}

TEST(RigidTransform, PlanarQuarterTurn) {
  const auto t = RigidTransform::planar(0.1, -0.2, std::numbers::pi / 2);
  const Vec3 p = t.apply(Vec3::UnitX());
  EXPECT_NEAR(p.x(), 0.1, 1e-12);
  EXPECT_NEAR(p.y(), 0.8, 1e-12);
  EXPECT_NEAR(p.z(), 0.0, 1e-12);
}

TEST(Kabsch, RecoversRandomTransform) {
  Rng rng(4);
  std::vector<Vec3> src, dst;
  const auto t = random_transform(rng);
  for (int i = 0; i < 50; ++i) {
    src.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    dst.push_back(t.apply(src.back()));
  }
  int rank = 0;
  const auto fit = kabsch(src, dst, {}, &rank);
  EXPECT_EQ(rank, 3);
  EXPECT_LT(rotation_distance(fit, t), 1e-10);
  EXPECT_LT(translation_distance(fit, t), 1e-10);
}

TEST(OrientedBox, CountsThe3095ParticleTwin) {
  Rng rng(5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 3095; ++i) {
    pts.emplace_back(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                     rng.uniform(0.0, 0.1));
  }
  OrientedBox box{Vec3(0, 0, 0.05), Vec3(1, 1, 1), Quat::Identity()};
  EXPECT_EQ(particles_in_obb(pts, box), 3095u);
}

TEST(OrientedBox, FaceIsInside) {
  OrientedBox box{Vec3::Zero(), Vec3(0.5, 0.25, 0.1), Quat::Identity()};
  const std::vector<Vec3> pts = {Vec3(0.5, 0.0, 0.0), Vec3(0.0, -0.25, 0.1),
                                 Vec3(0.5000001, 0.0, 0.0)};
  EXPECT_EQ(particles_in_obb(pts, box), 2u);
}

TEST(OrientedBox, MatchesBruteForceOnUnitCubeSamples) {
  Rng rng(6);
  std::vector<Vec3> pts;
  for (int i = 0; i < 1000; ++i) {
    pts.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  }
  OrientedBox box{Vec3::Constant(0.25), Vec3::Constant(0.25), Quat::Identity()};
  std::size_t expected = 0;
  for (const auto& p : pts) {
    expected += (p.array() >= 0.0).all() && (p.array() <= 0.5).all();
  }
  EXPECT_EQ(particles_in_obb(pts, box), expected);
}

TEST(OrientedBox, CountInvariantUnderRigidMotion) {
  Rng rng(7);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i) {
    pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  }
  OrientedBox box{Vec3(0.1, 0.2, 0.0), Vec3(0.4, 0.3, 0.5),
                  Quat(Eigen::AngleAxisd(0.3, Vec3::UnitZ()))};
  const std::size_t before = particles_in_obb(pts, box);
  for (int t = 0; t < 20; ++t) {
    const auto tf = random_transform(rng);
    std::vector<Vec3> moved;
    for (const auto& p : pts) moved.push_back(tf.apply(p));
    EXPECT_EQ(particles_in_obb(moved, box.transformed(tf)), before);
  }
}

TEST(MeshObj, UnitCubeCountsAndVolume) {
  const auto cube = make_box_mesh(Vec3::Constant(0.5), Vec3::Constant(0.5));
  const auto path = temp_file("cube.obj");
  save_mesh_obj(cube, path);
  const auto loaded = load_mesh_obj(path);
  EXPECT_EQ(loaded.vertices.size(), 8u);
  EXPECT_EQ(loaded.triangles.size(), 12u);
  EXPECT_NEAR(mesh_volume(loaded), 1.0, 1e-9);
}

TEST(MeshObj, QuadsAreFanTriangulated) {
  const std::string text =
      "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\n"
      "f 1 2 3 4\nf 1 2 6 5\n";
  const auto mesh = parse_mesh_obj(text, "quads");
  EXPECT_EQ(mesh.triangles.size(), 4u);
}

TEST(MeshObj, OutOfRangeIndexReportsLine) {
  const std::string text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n";
  try {
    parse_mesh_obj(text, "bad");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("bad:4:"), std::string::npos) << e.what();
  }
}

TEST(MeshDistance, SignedDistanceOfCube) {
  const MeshDistanceField field(make_box_mesh(Vec3::Constant(0.5)));
  const auto out = field.query(Vec3(0.0, 0.0, 0.8));
  EXPECT_NEAR(out.signed_distance, 0.3, 1e-12);
  EXPECT_LT((out.normal - Vec3::UnitZ()).norm(), 1e-12);
  const auto in = field.query(Vec3(0.0, 0.1, 0.4));
  EXPECT_NEAR(in.signed_distance, -0.1, 1e-12);
  EXPECT_LT((in.normal - Vec3::UnitZ()).norm(), 1e-12);
  EXPECT_TRUE(field.inside(Vec3(0.1, 0.1, 0.1)));
  EXPECT_FALSE(field.inside(Vec3(0.6, 0.1, 0.1)));
  // Outside near a corner: distance to the corner vertex.
  const auto corner = field.query(Vec3(0.6, 0.6, 0.6));
  EXPECT_NEAR(corner.signed_distance, std::sqrt(3.0) * 0.1, 1e-12);
}

TEST(MeshDistance, SignMatchesWindingOnPrism) {
  const std::vector<Eigen::Vector2d> tee = {
      {-0.1, 0.0}, {0.1, 0.0}, {0.1, 0.03}, {0.015, 0.03},
      {0.015, 0.12}, {-0.015, 0.12}, {-0.015, 0.03}, {-0.1, 0.03}};
  const MeshDistanceField field(make_prism_mesh(tee, 0.0, 0.03));
  Rng rng(8);
  for (int t = 0; t < 500; ++t) {
    const Vec3 p(rng.uniform(-0.12, 0.12), rng.uniform(-0.02, 0.14),
                 rng.uniform(-0.01, 0.04));
    const auto q = field.query(p);
    if (std::abs(q.signed_distance) < 1e-9) continue;
    EXPECT_EQ(q.signed_distance < 0.0, field.inside(p))
        << p.transpose() << " sd " << q.signed_distance;
  }
}

TEST(SplatPly, DefaultsDecode) {
  const auto path = temp_file("one.ply");
  write_ply(path, kPlyProps,
            {{0, 0, 0, 0, 0, 0, 0, std::log(0.02f), std::log(0.02f),
              std::log(0.02f), 1, 0, 0, 0}});
  const auto set = load_splat_ply(path);
  ASSERT_EQ(set.size(), 1u);
  const auto& k = set.kernels[0];
  EXPECT_DOUBLE_EQ(k.opacity(), 0.5);
  EXPECT_DOUBLE_EQ(k.color().x(), 0.5);
  EXPECT_DOUBLE_EQ(k.color().z(), 0.5);
  EXPECT_NEAR(k.scale().x(), 0.02, 1e-7);
  EXPECT_NEAR(k.scale().z(), 0.02, 1e-7);
}

TEST(SplatPly, MissingFieldNamed) {
  const auto path = temp_file("missing.ply");
  std::vector<std::string> props = kPlyProps;
  props.erase(props.begin() + 6);  // opacity
  write_ply(path, props, {std::vector<float>(13, 0.0f)});
  try {
    load_splat_ply(path);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("opacity"), std::string::npos);
  }
}

TEST(SplatPly, NonFiniteReportsIndex) {
  const auto path = temp_file("nan.ply");
  std::vector<float> ok(14, 0.0f);
  ok[10] = 1.0f;
  std::vector<float> bad = ok;
  bad[1] = std::numeric_limits<float>::quiet_NaN();
  write_ply(path, kPlyProps, {ok, ok, bad});
  try {
    load_splat_ply(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos) << e.what();
  }
}

TEST(SplatPly, RoundTripIsBitExact) {
  Rng rng(9);
  GaussianSet set;
  for (int i = 0; i < 100; ++i) {
    GaussianKernel k;
    k.position = Vec3(rng.normal(), rng.normal(), rng.normal());
    k.rotation = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    k.log_scale = Vec3(rng.normal(), rng.normal(), rng.normal());
    k.opacity_logit = rng.normal();
    k.color_dc = Vec3(rng.normal(), rng.normal(), rng.normal());
    k.label = static_cast<int>(rng.index(7));
    set.kernels.push_back(k);
  }
  const auto path = temp_file("roundtrip.ply");
  save_splat_ply(set, path);
  const auto back = load_splat_ply(path);
  ASSERT_EQ(back.size(), set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& a = set.kernels[i];
    const auto& b = back.kernels[i];
    EXPECT_EQ(a.position, b.position);
    EXPECT_EQ(a.rotation.coeffs(), b.rotation.coeffs());
    EXPECT_EQ(a.log_scale, b.log_scale);
    EXPECT_EQ(a.opacity_logit, b.opacity_logit);
    EXPECT_EQ(a.color_dc, b.color_dc);
    EXPECT_EQ(a.label, b.label);
  }
}

TEST(Spatial, GridPairsMatchBruteForce) {
  Rng rng(10);
  std::vector<Vec3> pts;
  for (int i = 0; i < 200; ++i) {
    pts.emplace_back(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                     rng.uniform(-0.1, 0.1));
  }
  const double r = 0.03;
  std::vector<std::pair<int, int>> brute;
  for (int i = 0; i < 200; ++i) {
    for (int j = i + 1; j < 200; ++j) {
      if ((pts[i] - pts[j]).squaredNorm() < r * r) brute.emplace_back(i, j);
    }
  }
  EXPECT_EQ(UniformGrid(pts, r).pairs_within(r), brute);
}

TEST(Spatial, KdTreeMatchesBruteForce) {
  Rng rng(11);
  std::vector<Vec3> pts;
  for (int i = 0; i < 300; ++i) {
    pts.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  }
  const KdTree tree(pts);
  for (int t = 0; t < 100; ++t) {
    const Vec3 q(rng.uniform(), rng.uniform(), rng.uniform());
    std::vector<std::pair<double, int>> all;
    for (int i = 0; i < 300; ++i) all.emplace_back((pts[i] - q).squaredNorm(), i);
    std::sort(all.begin(), all.end());
    EXPECT_EQ(tree.nearest(q).first, all[0].second);
    const auto k = tree.knn(q, 16);
    ASSERT_EQ(k.size(), 16u);
    for (int j = 0; j < 16; ++j) EXPECT_EQ(k[j].first, all[j].second);
    std::vector<int> within;
    for (const auto& [d2, i] : all) {
      if (d2 <= 0.04) within.push_back(i);
    }
    std::sort(within.begin(), within.end());
    EXPECT_EQ(tree.radius_search(q, 0.2), within);
  }
}
