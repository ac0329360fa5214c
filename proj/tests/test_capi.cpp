#include <doctest.h>

#include <filesystem>
#include <string>

#include "rgc/rgc.h"
#include "test_support.hpp"

extern "C" int rgc_c_check_status(void);

namespace fs = std::filesystem;
using rgc::testing::TempDir;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  rgc_string_free(s);
  return out;
}

std::string config_text(const rgc_config* cfg) {
  char* out = nullptr;
  REQUIRE(rgc_config_to_json(cfg, &out) == RGC_OK);
  return take(out);
}

rgc_config* tiny_config() {
  rgc_config* cfg = nullptr;
  REQUIRE(rgc_config_new(&cfg) == RGC_OK);
  for (const char* s : {"network.stem_channels=2", "network.block_channels=2", "network.block_depth=1",
                        "network.decoder_channels=2", "network.hidden_units=4", "train.epochs=1",
                        "train.iters_per_epoch=2", "train.batch_size=2", "augment.copies_per_scan=2",
                        "stratified=true"}) {
    REQUIRE(rgc_config_set(cfg, s) == RGC_OK);
  }
  return cfg;
}

void small_dataset(const fs::path& dir) {
  rgc_synth_options o;
  rgc_synth_options_default(&o);
  o.height = 256;
  o.width = 32;
  o.healthy = 6;
  o.early = 6;
  o.advanced = 6;
  o.seed = 4;
  REQUIRE(rgc_synth_dataset(dir.c_str(), &o) == RGC_OK);
}

}  // namespace

TEST_CASE("header compiles as C") { CHECK(rgc_c_check_status() == 1); }

TEST_CASE("config handle") {
  rgc_config* cfg = nullptr;
  REQUIRE(rgc_config_new(&cfg) == RGC_OK);
  const std::string before = config_text(cfg);
  CHECK(before.find("\"seed\": 1") != std::string::npos);

  CHECK(rgc_config_set(cfg, "train.epoch=3") == RGC_ERR_VALIDATION);
  CHECK(std::string(rgc_last_error()).find("train.epoch") != std::string::npos);
  CHECK(rgc_config_set(cfg, "train_fraction=2") == RGC_ERR_VALIDATION);
  CHECK(config_text(cfg) == before);
  CHECK(std::string(rgc_last_error()).empty());

  REQUIRE(rgc_config_set(cfg, "train.epochs=3") == RGC_OK);
  CHECK(config_text(cfg).find("\"epochs\": 3") != std::string::npos);
  rgc_config_free(cfg);

  rgc_config* bad = nullptr;
  CHECK(rgc_config_from_json("{oops", &bad) == RGC_ERR_FORMAT);
  CHECK(bad == nullptr);
  CHECK(rgc_config_from_json("{\"unknown\": 1}", &bad) == RGC_ERR_VALIDATION);
  CHECK(rgc_config_load("/nonexistent/cfg.json", &bad) == RGC_ERR_IO);
  CHECK(rgc_config_new(nullptr) == RGC_ERR_VALIDATION);
  rgc_config_free(nullptr);
  CHECK(std::string(rgc_status_name(RGC_ERR_STAGE)) == "stage failure");
}

TEST_CASE("pipeline through the C interface") {
  TempDir tmp("capi");
  small_dataset(tmp / "data");
  const std::string manifest = (tmp / "data" / "manifest.csv").string();
  const std::string run_dir = (tmp / "run").string();
  rgc_config* cfg = tiny_config();

  CHECK(rgc_run_init((tmp / "missing.csv").c_str(), run_dir.c_str(), cfg) == RGC_ERR_IO);
  REQUIRE(rgc_run_init(manifest.c_str(), run_dir.c_str(), cfg) == RGC_OK);
  CHECK(rgc_stage_segment(run_dir.c_str()) == RGC_ERR_STAGE);
  CHECK(std::string(rgc_last_error_stage()) == "segment");
  REQUIRE(rgc_stage_preprocess(run_dir.c_str()) == RGC_OK);
  REQUIRE(rgc_stage_train(run_dir.c_str(), nullptr) == RGC_OK);
  REQUIRE(rgc_stage_segment(run_dir.c_str()) == RGC_OK);
  REQUIRE(rgc_stage_profile(run_dir.c_str()) == RGC_OK);
  REQUIRE(rgc_stage_grade(run_dir.c_str()) == RGC_OK);
  char* staged = nullptr;
  REQUIRE(rgc_stage_evaluate(run_dir.c_str(), &staged) == RGC_OK);
  const std::string staged_report = take(staged);

  char* again = nullptr;
  REQUIRE(rgc_report(run_dir.c_str(), &again) == RGC_OK);
  CHECK(take(again) == staged_report);

  char* full = nullptr;
  REQUIRE(rgc_run(manifest.c_str(), (tmp / "run2").c_str(), nullptr, cfg, &full) == RGC_OK);
  CHECK(take(full) == staged_report);

  char* agree = nullptr;
  REQUIRE(rgc_agreement(manifest.c_str(), run_dir.c_str(), 1, &agree) == RGC_OK);
  CHECK(take(agree).rfind("clinician,r,p,n,note\n", 0) == 0);
  rgc_config_free(cfg);
}

TEST_CASE("network handle") {
  TempDir tmp("capinet");
  rgc_network* net = nullptr;
  REQUIRE(rgc_network_new(nullptr, 256, 128, 7, &net) == RGC_OK);
  size_t learnable = 0, state = 0;
  REQUIRE(rgc_network_parameters(net, &learnable, &state) == RGC_OK);
  CHECK(learnable == 13569);
  CHECK(state == 104);
  REQUIRE(rgc_network_save(net, (tmp / "m.bin").c_str()) == RGC_OK);
  rgc_network_free(net);

  rgc_network* loaded = nullptr;
  CHECK(rgc_network_load((tmp / "nope.bin").c_str(), &loaded) == RGC_ERR_IO);
  REQUIRE(rgc_network_load((tmp / "m.bin").c_str(), &loaded) == RGC_OK);
  int h = 0, w = 0;
  REQUIRE(rgc_network_input_size(loaded, &h, &w) == RGC_OK);
  CHECK(h == 256);
  CHECK(w == 128);

  rgc_synth_options o;
  rgc_synth_options_default(&o);
  o.healthy = 1;
  o.early = 0;
  o.advanced = 0;
  REQUIRE(rgc_synth_dataset((tmp / "d").c_str(), &o) == RGC_OK);
  const fs::path png = tmp / "d" / "scans" / "syn_0000.png";
  REQUIRE(fs::exists(png));
  double p = -1.0;
  REQUIRE(rgc_network_predict(loaded, png.c_str(), (tmp / "pred.png").c_str(), &p) == RGC_OK);
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);
  CHECK(fs::exists(tmp / "pred.png"));
  rgc_network_free(loaded);

  char* csv = nullptr;
  char* features = nullptr;
  const fs::path mask = tmp / "d" / "masks" / png.filename();
  REQUIRE(rgc_profile_mask(mask.c_str(), 2.6, &csv, &features) == RGC_OK);
  CHECK(take(csv).rfind("col,rnfl_um,gcip_um,gcc_um,valid\n", 0) == 0);
  CHECK(take(features).find("mean_rnfl") != std::string::npos);
  CHECK(rgc_profile_mask(mask.c_str(), 0.0, nullptr, nullptr) == RGC_ERR_VALIDATION);
}
