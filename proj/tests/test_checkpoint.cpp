#include "support/support.hpp"

#include "pipo/checkpoint.hpp"

#include <doctest.h>

using namespace pipo;
using namespace pipo::training;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.patch_side = 4;
  c.ratio = 0.4;
  c.modules = 2;
  c.channels = 2;
  c.epochs = 2;
  c.batch_size = 2;
  c.lr = 1e-3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("fresh checkpoint round trips byte for byte") {
  const Checkpoint c = initial_checkpoint(tiny_config());
  const std::string a = serialize_checkpoint(c);
  const std::string b = serialize_checkpoint(deserialize_checkpoint(a));
  CHECK(a == b);
  CHECK(a.substr(0, 8) == "PIPOCKPT");
}

TEST_CASE("trained checkpoint round trips and evaluates identically") {
  const auto imgs = test::synthetic_set(4, 8, 8, 3);
  auto cfg = tiny_config();
  cfg.lambda_mode = unfolding::LambdaMode::buffer_mean;
  const auto r = train(cfg, imgs, {});
  test::TempDir dir;
  save_checkpoint(dir / "c.ckpt", r.last);
  const Checkpoint back = load_checkpoint(dir / "c.ckpt");
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(r.last));
  CHECK(back.epoch == 2);
  CHECK(back.step == 4);
  CHECK(back.optimizer.step == 4);
  CHECK(back.optimizer.m.size() == r.last.optimizer.m.size());
  CHECK(back.pipeline.modules[1].lambda_buf == r.last.pipeline.modules[1].lambda_buf);
  const auto e1 = evaluate(r.last, imgs);
  const auto e2 = evaluate(back, imgs);
  CHECK(e1.mean_psnr == doctest::Approx(e2.mean_psnr).epsilon(1e-12));
  CHECK(e1.mean_ssim == doctest::Approx(e2.mean_ssim).epsilon(1e-12));
}

TEST_CASE("resumed training continues exactly") {
  const auto imgs = test::synthetic_set(4, 8, 8, 6);
  auto cfg = tiny_config();
  cfg.epochs = 3;
  const auto full = train(cfg, imgs, {});
  cfg.epochs = 1;
  auto part = train(cfg, imgs, {});
  Checkpoint mid = deserialize_checkpoint(serialize_checkpoint(part.last));
  mid.config.epochs = 3;
  const auto rest = resume(mid, imgs, {});
  CHECK(rest.last.step == full.last.step);
  CHECK(rest.last.pipeline.sampling.A == full.last.pipeline.sampling.A);
  CHECK(rest.last.pipeline.modules[0].prox.conv1.weight.value == full.last.pipeline.modules[0].prox.conv1.weight.value);
}

TEST_CASE("corrupted checkpoints are rejected") {
  const std::string bytes = serialize_checkpoint(initial_checkpoint(tiny_config()));
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), IoError);
  CHECK_THROWS_AS(deserialize_checkpoint("PIPOCKPX" + bytes.substr(8)), IoError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "!"), IoError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/c.ckpt"), IoError);
}
