#include <cmath>
#include <string>

#include "doctest.h"
#include "eraki/bench.hpp"
#include "eraki/config.hpp"
#include "eraki/hash.hpp"
#include "test_util.hpp"

using namespace eraki;
using nlohmann::json;

namespace {

json tiny_scenario() {
  return {{"seed", 5},
          {"phantom", {{"extents", {16, 24, 24}}, {"coils", 8}}},
          {"mask", {{"r1", 2}, {"r2", 2}, {"acs", {16, 16}}}},
          {"train", {{"iterations", 3}, {"widths", {8, 8, 8, 8}}, {"beta", 0.0}}},
          {"bench", {{"methods", {"zerofill", "grappa", "raki", "eraki"}}, {"warmup", false}}}};
}

}  // namespace

TEST_CASE("SHA-256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("run config parsing") {
  SUBCASE("seed is mandatory") { CHECK_THROWS_AS(run_config_from_json(json::object()), ConfigError); }
  SUBCASE("unknown keys are named") {
    for (const json& bad : {json{{"seed", 1}, {"colis", 3}}, json{{"seed", 1}, {"phantom", {{"colis", 3}}}},
                            json{{"seed", 1}, {"train", {{"lr_max", 3}}}}, json{{"seed", 1}, {"mask", {{"R", 3}}}}}) {
      try {
        run_config_from_json(bad);
        FAIL("expected ConfigError");
      } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK((msg.find("colis") != std::string::npos || msg.find("lr_max") != std::string::npos ||
               msg.find("\"R\"") != std::string::npos || msg.find(".R") != std::string::npos));
      }
    }
  }
  SUBCASE("wrong types and values") {
    CHECK_THROWS_AS(run_config_from_json({{"seed", 1}, {"phantom", {{"coils", "many"}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"seed", 1}, {"mask", {{"kind", "radial"}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"seed", 1}, {"mask", {{"axes", {"ky", "kq"}}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"seed", 1}, {"train", {{"alpha", 2.0}}}}), ConfigError);
  }
  SUBCASE("defaults and round trip") {
    const RunConfig c = run_config_from_json({{"seed", 42}});
    CHECK(c.train.seed == 42);
    CHECK(c.phantom.seed == 42);
    CHECK(c.train.alpha == 0.5);
    CHECK(c.train.beta == 0.15);
    CHECK(c.train.widths == std::array<std::size_t, 4>{64, 64, 64, 64});
    const json j = to_json(run_config_from_json(tiny_scenario()));
    CHECK(to_json(run_config_from_json(j)) == j);
    CHECK(j["train"]["iterations"] == 3);
    CHECK(j["mask"]["acs"] == json{16, 16});
  }
}

TEST_CASE("masks from config") {
  MaskConfig m;
  m.r1 = 2;
  m.r2 = 3;
  m.acs = {8, 8};
  const SamplingMask u = build_mask(m, {24, 24});
  CHECK(u.pattern().r1 == 2);
  CHECK(u.acs().length == std::array<std::size_t, 2>{8, 8});
  m.kind = "elliptical";
  CHECK(build_mask(m, {24, 24}).pattern().elliptical);
  m.acs = {30, 8};
  CHECK_THROWS_AS(build_mask(m, {24, 24}), ConfigError);

  const RunConfig k = run_config_from_json(
      {{"seed", 1}, {"mask", {{"kind", "kyt"}, {"r2", 4}, {"shift", 1}, {"acs", {0, 8}}}}});
  CHECK(k.mask.axes == std::array<Axis, 2>{Axis::t, Axis::ky});
  const SamplingMask kyt = build_mask(k.mask, {6, 32});
  CHECK(kyt.axes() == std::array<Axis, 2>{Axis::t, Axis::ky});
  CHECK(kyt.acs().length == std::array<std::size_t, 2>{6, 8});
}

TEST_CASE("echo as time relabels the phantom") {
  const RunConfig c = run_config_from_json(
      {{"seed", 1}, {"phantom", {{"extents", {8, 16, 1}}, {"coils", 2}, {"te_ms", {0, 5, 10}}, {"echo_as_time", true}}}});
  const Phantom ph = build_phantom(c);
  CHECK(ph.kspace.axes() == AxisList{Axis::coil, Axis::t, Axis::kx, Axis::ky});
  CHECK(ph.kspace.shape() == Shape{2, 3, 8, 16});
  CHECK(ph.combined.axes() == AxisList{Axis::t, Axis::kx, Axis::ky});
}

TEST_CASE("image metrics skip the margin") {
  CTensor ref({Axis::kx, Axis::ky}, {6, 6});
  for (auto& v : ref.data()) v = 2.0;
  CTensor img = ref;
  img.at({0, 3}) = 100.0;  // inside the 2-voxel margin
  const ImageMetrics m = image_metrics(img, ref, 2);
  CHECK(m.voxels == 4);
  CHECK(m.nrmse == 0.0);
  img.at({2, 3}) = 3.0;
  CHECK(image_metrics(img, ref, 2).nrmse == doctest::Approx(0.25));
  // Phase is ignored.
  CTensor rot = ref;
  for (auto& v : rot.data()) v *= std::polar(1.0, 0.7);
  CHECK(image_metrics(rot, ref, 0).nrmse < 1e-15);
}

TEST_CASE("bench report") {
  const RunConfig c = run_config_from_json(tiny_scenario());
  const json a = run_bench(c);
  REQUIRE(a["methods"].size() == 4);
  for (const auto& m : a["methods"]) {
    CAPTURE(m.dump());
    CHECK(m["ok"] == true);
    CHECK(m["timing"]["learning_seconds"].get<double>() >= 0);
    CHECK(m["timing"]["inference_seconds"].get<double>() >= 0);
  }
  CHECK(a["methods"][2]["models"] == 8);
  CHECK(a["methods"][2]["split_models"] == 16);
  CHECK(a["methods"][3]["models"] == 1);
  CHECK(a["model_ratio"]["split"] == 16.0);
  CHECK(a["methods"][1]["nrmse"].get<double>() < a["methods"][0]["nrmse"].get<double>());
  CHECK(a["published_reference"]["raki_learning_seconds"] == 25600.0);
  CHECK(a["timing"]["learning_ratio_raki_over_eraki"].get<double>() > 0);
  CHECK(a["config_hash"].get<std::string>().size() == 64);

  const json b = run_bench(c);
  CHECK(strip_timing(a) == strip_timing(b));
  CHECK(strip_timing(a).dump().find("learning_runs") == std::string::npos);

  const std::string table = bench_table(a);
  CHECK(table.find("ESPIRiT maps") != std::string::npos);
  CHECK(table.find("25600") != std::string::npos);
  CHECK(table.find("16:1") != std::string::npos);
}

TEST_CASE("bench records failing methods and keeps the rest") {
  json s = tiny_scenario();
  s["bench"]["methods"] = {"eraki-kyt", "zerofill"};
  const json r = run_bench(run_config_from_json(s));
  CHECK(r["methods"][0]["ok"] == false);
  CHECK(r["methods"][0]["error"].get<std::string>().size() > 0);
  CHECK(r["methods"][1]["ok"] == true);
  s["bench"]["methods"] = {"sense"};
  CHECK_THROWS_AS(run_bench(run_config_from_json(s)), ConfigError);
}
