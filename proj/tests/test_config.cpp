#include <doctest.h>

#include <fstream>

#include "eat/config.hpp"
#include "helpers.hpp"

using namespace eat;
using testutil::TempDir;

TEST_CASE("run config files parse keys, comments, and paths") {
  TempDir tmp;
  const auto path = tmp.path() / "run.cfg";
  std::ofstream(path) << "# experiment setup\n"
                         "n_classes=8\n"
                         "n_attributes = 6\n"
                         "\n"
                         "lambda=0.9   # fusion weight\n"
                         "eta=1.1\n"
                         "lr=0.02\n"
                         "momentum=0.8\n"
                         "epochs=12\n"
                         "seed=77\n"
                         "image_size=32\n"
                         "mode=baseline\n"
                         "loss_target=integrated\n"
                         "detach_cp=true\n"
                         "trunk_channels=8,16,32\n"
                         "data=/tmp/ds\n"
                         "out_ckpt=/tmp/model.ckpt\n";

  RunConfig rc = parse_run_config_file(path);
  CHECK(rc.eat.n_classes == 8);
  CHECK(rc.eat.n_attributes == 6);
  CHECK(rc.eat.lambda == doctest::Approx(0.9f));
  CHECK(rc.eat.eta == doctest::Approx(1.1f));
  CHECK(rc.eat.lr == doctest::Approx(0.02f));
  CHECK(rc.eat.momentum == doctest::Approx(0.8f));
  CHECK(rc.eat.epochs == 12);
  CHECK(rc.eat.seed == 77);
  CHECK(rc.eat.mode == Mode::Baseline);
  CHECK(rc.eat.loss_target == LossTarget::Integrated);
  CHECK(rc.eat.detach_cp);
  CHECK(rc.eat.trunk_channels == std::vector<int>{8, 16, 32});
  CHECK(rc.data == "/tmp/ds");
  CHECK(rc.out_ckpt == "/tmp/model.ckpt");
}

TEST_CASE("unknown keys are rejected with the offending line number") {
  TempDir tmp;
  const auto path = tmp.path() / "run.cfg";
  std::ofstream(path) << "n_classes=8\n"
                         "# fine\n"
                         "learning_rate=0.1\n";
  CHECK_THROWS_WITH_AS(parse_run_config_file(path), doctest::Contains("line 3"), Error);
}

TEST_CASE("bad values are rejected") {
  TempDir tmp;
  const auto path = tmp.path() / "run.cfg";

  std::ofstream(path) << "lr=fast\n";
  CHECK_THROWS_AS(parse_run_config_file(path), Error);

  std::ofstream(path, std::ios::trunc) << "mode=quick\n";
  CHECK_THROWS_AS(parse_run_config_file(path), Error);

  std::ofstream(path, std::ios::trunc) << "epochs\n";
  CHECK_THROWS_WITH_AS(parse_run_config_file(path), doctest::Contains("key=value"), Error);

  CHECK_THROWS_AS(parse_run_config_file(tmp.path() / "missing.cfg"), Error);
}
