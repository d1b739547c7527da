#include "lam3c/alignment.hpp"
#include "lam3c/config.hpp"
#include "lam3c/pipeline.hpp"
#include "lam3c/ply.hpp"
#include "lam3c/synth.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

using namespace lam3c;
namespace fs = std::filesystem;

namespace {

PointCloud small_cloud() {
  PointCloud c({Vec3(0, 0, 0), Vec3(1.5, -2, 0.25), Vec3(3, 4, 5)});
  c.colors = Positions{Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(128 / 255.0, 64 / 255.0, 32 / 255.0)};
  c.normals = Positions{Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lam3c_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::pair<PointCloud, GroundTruth> tilted_room(std::uint64_t seed, double tilt) {
  SceneSpec s;
  s.seed = seed;
  s.tilt_deg = tilt;
  s.scale = 1.3;
  s.translation = Vec3(2, -1, 0.5);
  return generate_room(s);
}

}  // namespace

TEST(Ply, AsciiRoundTrip) {
  const PointCloud c = small_cloud();
  const PlyReadResult r = parse_ply(serialize_ply(c, {PlyFormat::ascii, "double"}));
  EXPECT_EQ(r.format, PlyFormat::ascii);
  EXPECT_EQ(r.position_type, "double");
  EXPECT_EQ(r.cloud.positions, c.positions);
  ASSERT_TRUE(r.cloud.colors.has_value());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_LT(((*r.cloud.colors)[i] - (*c.colors)[i]).norm(), 1e-12);
  }
  EXPECT_EQ(*r.cloud.normals, *c.normals);
}

TEST(Ply, BinaryWriteReadWriteIsByteIdentical) {
  for (const std::string type : {"float", "double"}) {
    const std::string first = serialize_ply(small_cloud(), {PlyFormat::binary_little_endian, type});
    const PlyReadResult r = parse_ply(first);
    EXPECT_EQ(r.position_type, type);
    EXPECT_EQ(serialize_ply(r.cloud, {r.format, r.position_type}), first);
  }
  SceneSpec s;
  s.seed = 3;
  const std::string room = serialize_ply(generate_room(s).first);
  EXPECT_EQ(serialize_ply(parse_ply(room).cloud), room);
}

TEST(Ply, ExtrasKeptOnReadDroppedOnWrite) {
  const std::string text =
      "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
      "property float intensity\nend_header\n0 0 0 0.5\n1 2 3 0.25\n";
  const PlyReadResult r = parse_ply(text);
  ASSERT_EQ(r.cloud.extras.size(), 1u);
  EXPECT_EQ(r.cloud.extras[0].name, "intensity");
  EXPECT_EQ(r.cloud.extras[0].values, (std::vector<double>{0.5, 0.25}));
  std::vector<std::string> warnings;
  const std::string out = serialize_ply(r.cloud, {}, &warnings);
  EXPECT_FALSE(warnings.empty());
  EXPECT_EQ(out.find("intensity"), std::string::npos);
}

TEST(Ply, InvalidPointsAreNotWritten) {
  PointCloud c = small_cloud();
  c.valid = {1, 0, 1};
  EXPECT_EQ(parse_ply(serialize_ply(c)).cloud.size(), 2u);
}

TEST(Ply, MalformedInput) {
  EXPECT_THROW(parse_ply("not a ply"), IoError);
  EXPECT_THROW(parse_ply("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nend_header\n1\n"), IoError);
  const std::string good = serialize_ply(small_cloud());
  EXPECT_THROW(parse_ply(good.substr(0, good.size() - 5)), IoError);
  EXPECT_THROW(read_ply("/nonexistent/file.ply"), IoError);
}

TEST(Config, TrainRoundTrip) {
  TrainConfig c = toy_train_config();
  c.seed = 99;
  c.loss.mu = 0.125;
  const std::string j = train_config_to_json(c);
  EXPECT_EQ(train_config_to_json(train_config_from_json(j)), j);
  const TrainConfig partial = train_config_from_json(R"({"batch_size": 3, "lambda": 0})");
  EXPECT_EQ(partial.batch_size, 3);
  EXPECT_EQ(schedule_value(partial.lambda, 500), 0.0);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(train_config_from_json(R"({"batch_size": 4, "no_such_field": 1})"), ConfigError);
  EXPECT_THROW(train_config_from_json(R"({"loss": {"nu": 1}})"), ConfigError);
  EXPECT_THROW(align_config_from_json(R"({"sor": {"kk": 3}})"), ConfigError);
  EXPECT_THROW(scene_spec_from_json(R"({"extent": [1, 2, 3]})"), ConfigError);
  EXPECT_THROW(train_config_from_json("{"), ConfigError);
}

TEST(Config, AlignAndSceneRoundTrip) {
  AlignConfig a;
  a.scale.fixed = 6.5;
  a.ransac_threshold = 0.03;
  const std::string aj = align_config_to_json(a);
  EXPECT_EQ(align_config_to_json(align_config_from_json(aj)), aj);
  const std::string sj = scene_spec_to_json(toy_scene_spec());
  EXPECT_EQ(scene_spec_to_json(scene_spec_from_json(sj)), sj);
}

TEST(Report, CsvAndJsonRoundTrip) {
  PipelineReport r;
  SceneReport a;
  a.name = "a";
  a.input_points = 10;
  a.plane_found = true;
  a.angle_before_deg = 7.25;
  a.angle_after_deg = 0.125;
  a.alpha = 0.5;
  a.s_target = 8.0;
  a.final_diagonal = 8.0;
  SceneReport b;
  b.name = "b, with comma";
  b.error = "bad \"header\"";
  r.rows = {a, b};
  EXPECT_EQ(report_from_json(report_to_json(r)), r);
  const PipelineReport back = report_from_csv(report_to_csv(r));
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[1].name, b.name);
  EXPECT_EQ(back.rows[1].error, b.error);
  EXPECT_EQ(back.rows[0].angle_before_deg, a.angle_before_deg);
  EXPECT_FALSE(back.rows[1].angle_before_deg.has_value());
  EXPECT_EQ(back.failures(), 1u);
}

TEST(AlignScene, TiltedRoomLandsOnFloor) {
  AlignConfig cfg;
  cfg.scale.fixed = 8.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto [cloud, truth] = tilted_room(seed, 12.0);
    const AlignOutput out = align_scene(cloud, cfg, "room");
    std::vector<double> floor_z;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (truth.surface_ids[i] == kFloor && truth.labels[i] == PointLabel::surface) {
        floor_z.push_back(out.transform.apply(cloud.positions[i]).z());
      }
    }
    std::nth_element(floor_z.begin(), floor_z.begin() + floor_z.size() / 2, floor_z.end());
    EXPECT_NEAR(floor_z[floor_z.size() / 2], 0.0, 0.01);
    EXPECT_NEAR(out.report.final_diagonal, 8.0, 8e-6);
    ASSERT_TRUE(out.report.angle_after_deg.has_value());
    EXPECT_LT(*out.report.angle_after_deg, 1.0);
    EXPECT_NEAR(*out.report.angle_before_deg, 12.0, 1.0);
    EXPECT_TRUE(out.cloud.normals.has_value());
  }
}

TEST(AlignScene, AlignedRoomIsNearlyUntouched) {
  SceneSpec s;
  s.seed = 5;
  const PointCloud cloud = generate_room(s).first;
  AlignConfig cfg;
  cfg.scale.fixed = aabb_diagonal(cloud);
  const AlignOutput out = align_scene(cloud, cfg, "flat");
  EXPECT_LT(out.report.rotation_deg, 0.5);
  EXPECT_NEAR(out.report.alpha, 1.0, 0.02);
}

TEST(AlignScene, NamedStreamsAreDeterministic) {
  const PointCloud cloud = tilted_room(4, 5.0).first;
  AlignConfig cfg;
  cfg.downsample_points = 3000;
  const AlignOutput a = align_scene(cloud, cfg, "x");
  const AlignOutput b = align_scene(cloud, cfg, "x");
  EXPECT_EQ(a.cloud.positions, b.cloud.positions);
  EXPECT_EQ(a.report.s_target, b.report.s_target);
  EXPECT_NE(scene_seed(0, "x"), scene_seed(0, "y"));
}

TEST(CliAlign, CorruptFileBecomesErrorRow) {
  const fs::path in = fresh_dir("align_in");
  for (int i = 0; i < 4; ++i) {
    write_ply(in / ("scene_" + std::to_string(i) + ".ply"), tilted_room(10 + i, 8.0).first);
  }
  write_text_file(in / "scene_9.ply", "ply\nformat binary_little_endian 1.0\nelement vertex 1000\nproperty float x\n");
  AlignConfig cfg;
  cfg.scale.fixed = 8.0;
  const fs::path out1 = fresh_dir("align_out1");
  const fs::path out2 = fresh_dir("align_out2");
  PipelineReport r1 = cli_align(in, out1, cfg, 1);
  PipelineReport r2 = cli_align(in, out2, cfg, 2);
  ASSERT_EQ(r1.rows.size(), 5u);
  EXPECT_EQ(r1.failures(), 1u);
  EXPECT_FALSE(r1.rows[4].ok());
  EXPECT_EQ(r1.rows[4].name, "scene_9.ply");
  std::size_t written = 0;
  for (const auto& e : fs::directory_iterator(out1)) {
    written += e.path().extension() == ".ply" ? 1 : 0;
  }
  EXPECT_EQ(written, 4u);
  for (auto* r : {&r1, &r2}) {
    for (auto& row : r->rows) {
      row.wall_ms = 0.0;
    }
  }
  EXPECT_EQ(r1, r2);
  EXPECT_EQ(read_text_file(out1 / "scene_0.ply"), read_text_file(out2 / "scene_0.ply"));
  EXPECT_THROW(cli_align(in / "missing", out1, cfg), IoError);
}

TEST(PcaColors, ConstantEmbeddingsGiveGray) {
  const PointCloud c = small_cloud();
  const PointCloud colored = pca_colors(c, Matrix::Constant(3, 4, 0.25));
  for (const auto& col : *colored.colors) {
    EXPECT_EQ(col, Vec3(0.5, 0.5, 0.5));
  }
}

TEST(PcaColors, ClustersGetDistinctColors) {
  CounterRng rng(1);
  const std::size_t n = 200;
  PointCloud c(Positions(n, Vec3::Zero()));
  Matrix e(n, 8);
  for (std::size_t i = 0; i < n; ++i) {
    const double side = i < n / 2 ? 1.0 : -1.0;
    for (int j = 0; j < 8; ++j) {
      e(static_cast<Eigen::Index>(i), j) = side * (j < 4 ? 1.0 : 0.0) + 0.05 * rng.normal();
    }
  }
  const PointCloud colored = pca_colors(c, e);
  Vec3 a = Vec3::Zero(), b = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    (i < n / 2 ? a : b) += (*colored.colors)[i] / static_cast<double>(n / 2);
  }
  EXPECT_GT((a - b).norm(), 0.3);
  for (const auto& col : *colored.colors) {
    EXPECT_GE(col.minCoeff(), 0.0);
    EXPECT_LE(col.maxCoeff(), 1.0);
  }
  EXPECT_THROW(pca_colors(c, Matrix::Zero(3, 8)), ShapeError);
}

TEST(PcaProject, SignFixedAndOrthogonal) {
  CounterRng rng(2);
  const Matrix e = lam3c::test::random_matrix(50, 6, rng);
  const Matrix p = pca_project(e, 3);
  ASSERT_EQ(p.cols(), 3);
  const Matrix flipped = pca_project(-e, 3);
  // Negating the data flips the scores but not the sign-fixed directions.
  EXPECT_LT((flipped + p).cwiseAbs().maxCoeff(), 1e-9);
  const Matrix gram = p.transpose() * p;
  EXPECT_LT(std::abs(gram(0, 1)), 1e-9);
  EXPECT_GE(gram(0, 0), gram(1, 1));
}
