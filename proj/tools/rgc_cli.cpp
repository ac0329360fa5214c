// Command-line front end. Uses only the C interface.
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rgc/rgc.h"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

struct Failure {
  rgc_status status;
};

void check(rgc_status s) {
  if (s != RGC_OK) throw Failure{s};
}

int exit_code(rgc_status s) {
  return s == RGC_ERR_VALIDATION || s == RGC_ERR_FORMAT ? kExitValidation : kExitStage;
}

// Owns a string returned by the library.
class Text {
 public:
  Text() = default;
  Text(const Text&) = delete;
  Text& operator=(const Text&) = delete;
  ~Text() { rgc_string_free(p_); }
  char** out() { return &p_; }
  bool empty() const { return p_ == nullptr; }
  const char* c_str() const { return p_ ? p_ : ""; }

 private:
  char* p_ = nullptr;
};

struct ConfigHandle {
  rgc_config* cfg = nullptr;
  ~ConfigHandle() { rgc_config_free(cfg); }
};

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;

  void add_to(CLI::App* app) {
    app->add_option("--config", file, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "Override a config field, e.g. --set train.epochs=5")->take_all();
  }

  void build(ConfigHandle& h) const {
    check(file.empty() ? rgc_config_new(&h.cfg) : rgc_config_load(file.c_str(), &h.cfg));
    for (const auto& s : sets) check(rgc_config_set(h.cfg, s.c_str()));
  }
};

void emit(const char* text, const std::string& path) {
  if (path.empty()) {
    std::fputs(text, stdout);
    return;
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) {
    std::fprintf(stderr, "error: cannot write %s\n", path.c_str());
    throw Failure{RGC_ERR_IO};
  }
  std::fputs(text, f);
  std::fclose(f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retinal layer segmentation, thickness profiling and glaucoma grading"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rgc_version()));

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset with masks, grades and a manifest");
  rgc_synth_options so;
  rgc_synth_options_default(&so);
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--healthy", so.healthy, "Healthy scans")->capture_default_str();
  synth->add_option("--early", so.early, "Early glaucoma scans")->capture_default_str();
  synth->add_option("--advanced", so.advanced, "Advanced glaucoma scans")->capture_default_str();
  synth->add_option("--height", so.height, "Scan height (axial pixels)")->capture_default_str();
  synth->add_option("--width", so.width, "Scan width (A-scans)")->capture_default_str();
  synth->add_option("--scale", so.axial_scale_um, "Axial scale in um per pixel")->capture_default_str();
  synth->add_option("--noise", so.noise_std, "Speckle noise standard deviation")->capture_default_str();
  synth->add_option("--disagreement", so.clinician_disagreement, "Per-grade clinician disagreement rate")
      ->capture_default_str();
  synth->add_option("--seed", so.seed, "Root seed")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Every stage from preprocessing to the report");
  std::string manifest, run_dir, model;
  ConfigArgs run_cfg;
  run->add_option("--manifest", manifest, "Dataset manifest CSV")->required()->check(CLI::ExistingFile);
  run->add_option("--run", run_dir, "Run directory")->required();
  run->add_option("--model", model, "Use this trained model instead of training")->check(CLI::ExistingFile);
  run_cfg.add_to(run);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Start a run and extract the retina of every scan, or one scan");
  ConfigArgs pre_cfg;
  std::string pre_scan, pre_out, pre_mask;
  pre->add_option("--manifest", manifest, "Dataset manifest CSV")->check(CLI::ExistingFile);
  pre->add_option("--run", run_dir, "Run directory to create");
  pre->add_option("--scan", pre_scan, "Single scan to preprocess")->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "Output image for --scan");
  pre->add_option("--mask-out", pre_mask, "Optional retina mask image for --scan");
  pre_cfg.add_to(pre);

  // train
  auto* train = app.add_subcommand("train", "Train the network on the run's training split");
  train->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--model", model, "Copy in this trained model instead")->check(CLI::ExistingFile);

  // segment
  auto* seg = app.add_subcommand("segment", "Segment the run's test scans, or one scan");
  std::string seg_scan, seg_mask;
  seg->add_option("--run", run_dir, "Run directory")->check(CLI::ExistingDirectory);
  seg->add_option("--model", model, "Model for --scan")->check(CLI::ExistingFile);
  seg->add_option("--scan", seg_scan, "Single preprocessed scan")->check(CLI::ExistingFile);
  seg->add_option("--mask-out", seg_mask, "Label mask output for --scan");

  // profile
  auto* prof = app.add_subcommand("profile", "Thickness profiles of the run's segmentations, or of one mask");
  std::string prof_mask, prof_csv, prof_json;
  double prof_scale = 2.6;
  prof->add_option("--run", run_dir, "Run directory")->check(CLI::ExistingDirectory);
  prof->add_option("--mask", prof_mask, "Single label mask")->check(CLI::ExistingFile);
  prof->add_option("--scale", prof_scale, "Axial scale in um per pixel for --mask")->capture_default_str();
  prof->add_option("--out", prof_csv, "Profile CSV output for --mask (default stdout)");
  prof->add_option("--features-out", prof_json, "Features JSON output for --mask");

  // grade
  auto* grade = app.add_subcommand("grade", "Fit the SVM and grade the screened test scans");
  grade->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Compute and store the run's metric report");
  std::string report_out;
  eval->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", report_out, "Also write the report here");

  // report
  auto* report = app.add_subcommand("report", "Recompute the report from a finished run's artifacts");
  report->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", report_out, "Write the report here instead of stdout");

  // agreement
  auto* agree = app.add_subcommand("agreement", "Pearson agreement of final grades with each clinician");
  bool agree_csv = false;
  std::string agree_out;
  agree->add_option("--manifest", manifest, "Manifest with clinician columns")->required()->check(CLI::ExistingFile);
  agree->add_option("--run", run_dir, "Graded run directory")->required()->check(CLI::ExistingDirectory);
  agree->add_flag("--csv", agree_csv, "CSV instead of JSON");
  agree->add_option("--out", agree_out, "Output file (default stdout)");

  // config
  auto* config = app.add_subcommand("config", "Print the resolved configuration");
  ConfigArgs show_cfg;
  show_cfg.add_to(config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  auto usage = [](const char* msg) {
    std::fprintf(stderr, "error: %s\n", msg);
    return kExitValidation;
  };

  try {
    if (*synth) {
      check(rgc_synth_dataset(synth_out.c_str(), &so));
      std::printf("%s/manifest.csv\n", synth_out.c_str());
    } else if (*run) {
      ConfigHandle h;
      run_cfg.build(h);
      Text out;
      check(rgc_run(manifest.c_str(), run_dir.c_str(), model.empty() ? nullptr : model.c_str(), h.cfg, out.out()));
      std::fputs(out.c_str(), stdout);
    } else if (*pre) {
      ConfigHandle h;
      pre_cfg.build(h);
      if (!pre_scan.empty()) {
        if (pre_out.empty()) return usage("--scan needs --out");
        check(rgc_preprocess_scan(pre_scan.c_str(), pre_out.c_str(), pre_mask.empty() ? nullptr : pre_mask.c_str(),
                                  h.cfg));
      } else {
        if (manifest.empty() || run_dir.empty()) return usage("give --manifest and --run, or --scan and --out");
        check(rgc_run_init(manifest.c_str(), run_dir.c_str(), h.cfg));
        check(rgc_stage_preprocess(run_dir.c_str()));
      }
    } else if (*train) {
      check(rgc_stage_train(run_dir.c_str(), model.empty() ? nullptr : model.c_str()));
    } else if (*seg) {
      if (!seg_scan.empty()) {
        if (model.empty() || seg_mask.empty()) return usage("--scan needs --model and --mask-out");
        rgc_network* net = nullptr;
        check(rgc_network_load(model.c_str(), &net));
        double p = 0.0;
        const rgc_status s = rgc_network_predict(net, seg_scan.c_str(), seg_mask.c_str(), &p);
        rgc_network_free(net);
        check(s);
        std::printf("glaucoma_probability %.6f\n", p);
      } else {
        if (run_dir.empty()) return usage("give --run, or --scan with --model and --mask-out");
        check(rgc_stage_segment(run_dir.c_str()));
      }
    } else if (*prof) {
      if (!prof_mask.empty()) {
        Text csv, features;
        check(rgc_profile_mask(prof_mask.c_str(), prof_scale, csv.out(), features.out()));
        emit(csv.c_str(), prof_csv);
        if (!prof_json.empty()) {
          if (features.empty()) return usage("no column of the mask holds both layers; no features written");
          emit(features.c_str(), prof_json);
        }
      } else {
        if (run_dir.empty()) return usage("give --run or --mask");
        check(rgc_stage_profile(run_dir.c_str()));
      }
    } else if (*grade) {
      check(rgc_stage_grade(run_dir.c_str()));
    } else if (*eval) {
      Text out;
      check(rgc_stage_evaluate(run_dir.c_str(), out.out()));
      std::fputs(out.c_str(), stdout);
      if (!report_out.empty()) emit(out.c_str(), report_out);
    } else if (*report) {
      Text out;
      check(rgc_report(run_dir.c_str(), out.out()));
      emit(out.c_str(), report_out);
    } else if (*agree) {
      Text out;
      check(rgc_agreement(manifest.c_str(), run_dir.c_str(), agree_csv ? 1 : 0, out.out()));
      emit(out.c_str(), agree_out);
    } else if (*config) {
      ConfigHandle h;
      show_cfg.build(h);
      Text out;
      check(rgc_config_to_json(h.cfg, out.out()));
      std::fputs(out.c_str(), stdout);
    }
  } catch (const Failure& f) {
    const char* msg = rgc_last_error();
    std::fprintf(stderr, "error (%s): %s\n", rgc_status_name(f.status), *msg ? msg : "failed");
    return exit_code(f.status);
  }
  return 0;
}
