#include "support/support.hpp"

#include "pipo/config.hpp"
#include "pipo/training.hpp"

#include <doctest.h>

#include <fstream>

using namespace pipo;
using config::IniDocument;

TEST_CASE("ini parsing") {
  const auto doc = IniDocument::parse("# top\n[a]\nx = 1 ; note\n y=two words \n\n[b]\nz=\n");
  CHECK(doc.get("a.x") == "1");
  CHECK(doc.get("a.y") == "two words");
  CHECK(doc.get("b.z") == "");
  CHECK_FALSE(doc.get("a.z").has_value());
  CHECK(doc.values().size() == 3);
}

TEST_CASE("ini errors name the line") {
  auto msg = [](const std::string& text) {
    try {
      IniDocument::parse(text, "f.ini");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(msg("[a\n") == "f.ini:1: malformed section header");
  CHECK(msg("x = 1\n") == "f.ini:1: key 'x' outside a section");
  CHECK(msg("[a]\nnovalue\n") == "f.ini:2: expected key = value");
  CHECK(msg("[a]\nx=1\nx=2\n") == "f.ini:3: duplicate key 'a.x'");
  CHECK(msg("[]\n") == "f.ini:1: empty section name");
  CHECK_THROWS_AS(IniDocument::load("/nonexistent/dir/x.ini"), ConfigError);
}

TEST_CASE("render is canonical and parses back") {
  IniDocument d;
  d.set("z.b", "2");
  d.set("a.c", "x");
  d.set("z.a", "1");
  CHECK(d.render() == "[a]\nc = x\n\n[z]\na = 1\nb = 2\n");
  CHECK(IniDocument::parse(d.render()).values() == d.values());
}

TEST_CASE("unknown keys are rejected") {
  const auto d = IniDocument::parse("[a]\nx=1\ny=2\n");
  CHECK_NOTHROW(d.reject_unknown({"a.x", "a.y"}));
  CHECK_THROWS_WITH_AS(d.reject_unknown({"a.x"}), "unknown configuration key 'a.y'", ConfigError);
}

TEST_CASE("value parsers") {
  for (double v : {0.1, 1e-300, -3.25, 0.25, 1.0 / 3.0})
    CHECK(config::parse_double("k", config::format_double(v)) == v);
  CHECK_THROWS_AS(config::parse_double("k", "1.5x"), ConfigError);
  CHECK_THROWS_AS(config::parse_double("k", ""), ConfigError);
  CHECK(config::parse_int("k", "-12") == -12);
  CHECK_THROWS_AS(config::parse_int("k", "1.0"), ConfigError);
  CHECK(config::parse_bool("k", "Yes"));
  CHECK_FALSE(config::parse_bool("k", "off"));
  CHECK_THROWS_AS(config::parse_bool("k", "maybe"), ConfigError);
  CHECK(config::parse_double_list("k", "0.25, 0.1,0.01") == std::vector<double>{0.25, 0.1, 0.01});
  CHECK_THROWS_AS(config::parse_double_list("k", "0.25,,"), ConfigError);
}

TEST_CASE("training configuration round trips through ini") {
  training::TrainConfig c;
  c.ratio = 0.1;
  c.modules = 3;
  c.coupling = unfolding::Coupling::end2end;
  c.lambda_mode = unfolding::LambdaMode::buffer_mean;
  c.loss_mode = training::LossMode::mse_only;
  c.seed = 99;
  c.train_sampling = false;
  IniDocument d;
  c.store(d);
  CHECK(d.values().size() == training::TrainConfig::keys().size());
  for (const auto& k : training::TrainConfig::keys()) CHECK(d.has(k));
  const auto back = training::TrainConfig::load(IniDocument::parse(d.render()));
  IniDocument d2;
  back.store(d2);
  CHECK(d2.render() == d.render());
}

TEST_CASE("training configuration validation") {
  auto bad = [](auto mutate) {
    training::TrainConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](auto& c) { c.ratio = 0.0; });
  bad([](auto& c) { c.ratio = 1.2; });
  bad([](auto& c) { c.patch_side = 1; });
  bad([](auto& c) { c.modules = -1; });
  bad([](auto& c) { c.channels = 0; });
  bad([](auto& c) { c.batch_size = 0; });
  bad([](auto& c) { c.lr = -1e-3; });
  bad([](auto& c) { c.gamma = NAN; });
  bad([](auto& c) { c.rho_init = 0.0; });
  CHECK_NOTHROW(training::TrainConfig{}.validate());
  CHECK(training::TrainConfig{}.measurements() == 272);
  CHECK_THROWS_AS(training::TrainConfig::load(IniDocument::parse("[training]\nseed = -1\n")), ConfigError);
  CHECK_THROWS_AS(training::TrainConfig::load(IniDocument::parse("[training]\nloss = l1\n")), ConfigError);
}
