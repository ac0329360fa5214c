#include "rgc/rgc.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "rgc/error.hpp"
#include "rgc/image_io.hpp"
#include "rgc/pipeline.hpp"
#include "rgc/profiles.hpp"
#include "rgc/segment.hpp"

struct rgc_config {
  std::string json;  // full, validated config
};

struct rgc_network {
  rgc::nn::Network net;
};

namespace {

using namespace rgc;
namespace fs = std::filesystem;

thread_local std::string g_error;
thread_local std::string g_stage;

rgc_status fail(rgc_status s, const char* what, std::string stage = {}) {
  g_error = what;
  g_stage = std::move(stage);
  return s;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
rgc_status guarded(F&& body) {
  g_error.clear();
  g_stage.clear();
  try {
    body();
    return RGC_OK;
  } catch (const StageError& e) {
    return fail(RGC_ERR_STAGE, e.what(), e.stage());
  } catch (const ValidationError& e) {
    return fail(RGC_ERR_VALIDATION, e.what());
  } catch (const FormatError& e) {
    return fail(RGC_ERR_FORMAT, e.what());
  } catch (const IoError& e) {
    return fail(RGC_ERR_IO, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(RGC_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(RGC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RGC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(RGC_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* name) {
  if (!p) throw ValidationError(std::string(name) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

pipeline::RunConfig config_of(const rgc_config* cfg) {
  return cfg ? pipeline::parse_config(cfg->json) : pipeline::RunConfig{};
}

}  // namespace

extern "C" {

const char* rgc_version(void) { return "0.1.0"; }
const char* rgc_last_error(void) { return g_error.c_str(); }
const char* rgc_last_error_stage(void) { return g_stage.c_str(); }

const char* rgc_status_name(rgc_status status) {
  switch (status) {
    case RGC_OK: return "ok";
    case RGC_ERR_VALIDATION: return "validation error";
    case RGC_ERR_FORMAT: return "format error";
    case RGC_ERR_IO: return "i/o error";
    case RGC_ERR_STAGE: return "stage failure";
    case RGC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void rgc_string_free(char* s) { std::free(s); }

rgc_status rgc_config_new(rgc_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new rgc_config{pipeline::default_config_json()};
  });
}

rgc_status rgc_config_from_json(const char* json, rgc_config** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    *out = new rgc_config{pipeline::config_json(pipeline::parse_config(json))};
  });
}

rgc_status rgc_config_load(const char* path, rgc_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new rgc_config{pipeline::config_json(pipeline::load_config(fs::path(path), {}))};
  });
}

rgc_status rgc_config_set(rgc_config* cfg, const char* assignment) {
  return guarded([&] {
    require(cfg, "cfg");
    require(assignment, "assignment");
    const std::string next = pipeline::apply_override(cfg->json, assignment);
    cfg->json = pipeline::config_json(pipeline::parse_config(next));
  });
}

rgc_status rgc_config_to_json(const rgc_config* cfg, char** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = dup(cfg->json);
  });
}

void rgc_config_free(rgc_config* cfg) { delete cfg; }

void rgc_synth_options_default(rgc_synth_options* opts) {
  if (!opts) return;
  const pipeline::SynthDatasetOptions d;
  opts->healthy = d.healthy;
  opts->early = d.early;
  opts->advanced = d.advanced;
  opts->height = d.cohort.height;
  opts->width = d.cohort.width;
  opts->axial_scale_um = d.cohort.axial_scale_um_per_px;
  opts->noise_std = d.cohort.noise_std;
  opts->clinician_disagreement = d.clinician_disagreement;
  opts->seed = d.cohort.seed;
}

rgc_status rgc_synth_dataset(const char* dir, const rgc_synth_options* opts) {
  return guarded([&] {
    require(dir, "dir");
    require(opts, "opts");
    pipeline::SynthDatasetOptions o;
    o.healthy = opts->healthy;
    o.early = opts->early;
    o.advanced = opts->advanced;
    o.cohort.height = opts->height;
    o.cohort.width = opts->width;
    o.cohort.axial_scale_um_per_px = opts->axial_scale_um;
    o.cohort.noise_std = opts->noise_std;
    o.cohort.seed = opts->seed;
    o.clinician_disagreement = opts->clinician_disagreement;
    pipeline::write_synthetic_dataset(dir, o);
  });
}

rgc_status rgc_run_init(const char* manifest, const char* run_dir, const rgc_config* cfg) {
  return guarded([&] {
    require(manifest, "manifest");
    require(run_dir, "run_dir");
    pipeline::init_run({manifest, run_dir, std::nullopt}, config_of(cfg));
  });
}

rgc_status rgc_stage_preprocess(const char* run_dir) {
  return guarded([&] {
    require(run_dir, "run_dir");
    pipeline::preprocess_stage(run_dir);
  });
}

rgc_status rgc_stage_train(const char* run_dir, const char* model) {
  return guarded([&] {
    require(run_dir, "run_dir");
    pipeline::train_stage(run_dir, model ? std::optional<fs::path>(model) : std::nullopt);
  });
}

rgc_status rgc_stage_segment(const char* run_dir) {
  return guarded([&] {
    require(run_dir, "run_dir");
    pipeline::segment_stage(run_dir);
  });
}

rgc_status rgc_stage_profile(const char* run_dir) {
  return guarded([&] {
    require(run_dir, "run_dir");
    pipeline::profile_stage(run_dir);
  });
}

rgc_status rgc_stage_grade(const char* run_dir) {
  return guarded([&] {
    require(run_dir, "run_dir");
    pipeline::grade_stage(run_dir);
  });
}

rgc_status rgc_stage_evaluate(const char* run_dir, char** report_json) {
  return guarded([&] {
    require(run_dir, "run_dir");
    put(report_json, metrics::report_json(pipeline::evaluate_stage(run_dir)));
  });
}

rgc_status rgc_run(const char* manifest, const char* run_dir, const char* model, const rgc_config* cfg,
                   char** report_json) {
  return guarded([&] {
    require(manifest, "manifest");
    require(run_dir, "run_dir");
    const pipeline::RunOptions opts{manifest, run_dir, model ? std::optional<fs::path>(model) : std::nullopt};
    put(report_json, metrics::report_json(pipeline::run(opts, config_of(cfg))));
  });
}

rgc_status rgc_report(const char* run_dir, char** report_json) {
  return guarded([&] {
    require(run_dir, "run_dir");
    require(report_json, "report_json");
    *report_json = dup(metrics::report_json(pipeline::evaluate_run(run_dir)));
  });
}

rgc_status rgc_agreement(const char* manifest, const char* run_dir, int as_csv, char** out) {
  return guarded([&] {
    require(manifest, "manifest");
    require(run_dir, "run_dir");
    require(out, "out");
    const auto m = pipeline::load_manifest(manifest);
    const auto rows =
        pipeline::clinician_agreement(m, pipeline::read_final_grades(fs::path(run_dir) / "grade" / "grades.csv"));
    *out = dup(as_csv ? pipeline::agreement_csv(rows) : pipeline::agreement_json(rows));
  });
}

rgc_status rgc_preprocess_scan(const char* scan, const char* out, const char* mask_out, const rgc_config* cfg) {
  return guarded([&] {
    require(scan, "scan");
    require(out, "out");
    const auto c = config_of(cfg);
    pipeline::ManifestRecord r;
    r.scan = scan;
    const Scan s = pipeline::read_record_scan(r, c);
    const auto ex = preprocess::extract_retina(s, c.preprocess);
    io::write_scan(ex.retina, out);
    io::ScanMetadata meta;
    meta.axial_scale_um_per_px = s.axial_scale();
    meta.id = s.id();
    meta.scale_assumed = !io::read_sidecar(scan).has_value();
    io::write_sidecar(meta, out);
    if (mask_out) io::write_binary_mask(ex.mask, mask_out);
  });
}

rgc_status rgc_profile_mask(const char* mask, double axial_scale_um, char** profile_csv, char** features_json) {
  return guarded([&] {
    require(mask, "mask");
    const auto p = profiles::thickness(io::read_mask(mask), axial_scale_um);
    std::string features;
    if (p.valid_count() > 0) features = profiles::features_json(profiles::grade_features(p));
    put(profile_csv, profiles::profile_csv(p));
    if (features_json) *features_json = features.empty() ? nullptr : dup(features);
  });
}

rgc_status rgc_network_new(const rgc_config* cfg, int height, int width, uint64_t seed, rgc_network** out) {
  return guarded([&] {
    require(out, "out");
    nn::ToyNetOptions o = config_of(cfg).network;
    o.height = height;
    o.width = width;
    *out = new rgc_network{nn::Network(nn::toy_network(o), seed)};
  });
}

rgc_status rgc_network_load(const char* path, rgc_network** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new rgc_network{nn::load_network(path)};
  });
}

rgc_status rgc_network_save(const rgc_network* net, const char* path) {
  return guarded([&] {
    require(net, "net");
    require(path, "path");
    nn::save_network(net->net, path);
  });
}

rgc_status rgc_network_parameters(const rgc_network* net, size_t* learnable, size_t* non_learnable) {
  return guarded([&] {
    require(net, "net");
    const auto pc = nn::count_parameters(net->net.spec());
    if (learnable) *learnable = pc.learnable;
    if (non_learnable) *non_learnable = pc.non_learnable;
  });
}

rgc_status rgc_network_input_size(const rgc_network* net, int* height, int* width) {
  return guarded([&] {
    require(net, "net");
    const auto s = net->net.input_shape(1);
    if (height) *height = s.h;
    if (width) *width = s.w;
  });
}

rgc_status rgc_network_predict(const rgc_network* net, const char* scan, const char* mask_out,
                               double* glaucoma_probability) {
  return guarded([&] {
    require(net, "net");
    require(scan, "scan");
    const auto preds = segment::predict(net->net, {io::read_scan(scan)});
    if (mask_out) io::write_mask(preds[0].mask, mask_out);
    if (glaucoma_probability) *glaucoma_probability = preds[0].glaucoma_probability;
  });
}

void rgc_network_free(rgc_network* net) { delete net; }

}  // extern "C"
