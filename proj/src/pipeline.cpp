#include "rgc/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rgc/error.hpp"
#include "rgc/image_io.hpp"
#include "rgc/profiles.hpp"
#include "rgc/random.hpp"
#include "rgc/segment.hpp"

namespace rgc::pipeline {

using nlohmann::json;

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

GradeLabel grade_or_throw(const std::string& text, const std::string& where) {
  const auto g = parse_grade(text);
  if (!g) throw FormatError("unknown grade '" + text + "' in " + where);
  return *g;
}

// ---------------------------------------------------------------------------
// Config <-> JSON

json to_json(const RunConfig& c) {
  const auto& p = c.preprocess;
  const auto& n = c.network;
  const auto& t = c.train;
  return {
      {"seed", c.seed},
      {"axial_scale_um", c.axial_scale_um},
      {"train_fraction", c.train_fraction},
      {"stratified", c.stratified},
      {"screen_threshold", c.screen_threshold},
      {"preprocess",
       {{"enabled", c.preprocess_enabled},
        {"smoothing_sigma", p.smoothing_sigma},
        {"tau_px", p.tau_px},
        {"binarize", p.binarize == preprocess::Binarization::Otsu ? "otsu" : "fixed"},
        {"fixed_threshold", p.fixed_threshold},
        {"median_window", p.median_window},
        {"refine_to_peak", p.refine_to_peak}}},
      {"network",
       {{"stem_channels", n.stem_channels},
        {"block_channels", n.block_channels},
        {"block_depth", n.block_depth},
        {"block_rate", n.block_rate},
        {"decoder_channels", n.decoder_channels},
        {"cls_avg_pool", n.cls_avg_pool},
        {"cls_max_pool", n.cls_max_pool},
        {"hidden_units", n.hidden_units}}},
      {"loss", {{"alpha1", t.loss.alpha1}, {"alpha2", t.loss.alpha2}, {"epsilon", t.loss.epsilon}}},
      {"optimizer", {{"rho", t.optimizer.rho}, {"eps", t.optimizer.eps}, {"lr", t.optimizer.lr}}},
      {"augment",
       {{"horizontal_flip", t.augment.horizontal_flip},
        {"rotation_deg", t.augment.rotation_deg},
        {"noise_variance", t.augment.noise_variance},
        {"copies_per_scan", t.augment.copies_per_scan}}},
      {"train",
       {{"epochs", t.epochs},
        {"iters_per_epoch", t.iters_per_epoch},
        {"batch_size", t.batch_size},
        {"seg_weight", t.seg_weight},
        {"cls_weight", t.cls_weight},
        {"balance_classes", t.balance_classes}}},
      {"svm", {{"lambda", c.svm.lambda}, {"epochs", c.svm.epochs}}},
      {"threshold", {{"rnfl_threshold_um", c.threshold.rnfl_threshold_um}}},
  };
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

// Every key of `given` must exist in `reference` with a compatible type.
void check_keys(const json& given, const json& reference, const std::string& prefix) {
  if (!given.is_object()) throw ValidationError("config" + (prefix.empty() ? "" : " '" + prefix + "'") + " must be an object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!reference.contains(it.key())) throw ValidationError("unknown config key '" + key + "'");
    const json& ref = reference.at(it.key());
    if (ref.is_object()) {
      check_keys(*it, ref, key);
    } else if (!same_kind(*it, ref)) {
      throw ValidationError("config key '" + key + "' expects a " + std::string(ref.type_name()));
    }
  }
}

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.seed = get<std::uint64_t>(j, "seed");
  c.axial_scale_um = get<double>(j, "axial_scale_um");
  c.train_fraction = get<double>(j, "train_fraction");
  c.stratified = get<bool>(j, "stratified");
  c.screen_threshold = get<double>(j, "screen_threshold");
  const json& p = j.at("preprocess");
  c.preprocess_enabled = get<bool>(p, "enabled");
  c.preprocess.smoothing_sigma = get<double>(p, "smoothing_sigma");
  c.preprocess.tau_px = get<int>(p, "tau_px");
  const auto bin = get<std::string>(p, "binarize");
  if (bin != "otsu" && bin != "fixed") throw ValidationError("preprocess.binarize must be 'otsu' or 'fixed'");
  c.preprocess.binarize = bin == "otsu" ? preprocess::Binarization::Otsu : preprocess::Binarization::Fixed;
  c.preprocess.fixed_threshold = get<double>(p, "fixed_threshold");
  c.preprocess.median_window = get<int>(p, "median_window");
  c.preprocess.refine_to_peak = get<bool>(p, "refine_to_peak");
  const json& n = j.at("network");
  c.network.stem_channels = get<int>(n, "stem_channels");
  c.network.block_channels = get<int>(n, "block_channels");
  c.network.block_depth = get<int>(n, "block_depth");
  c.network.block_rate = get<int>(n, "block_rate");
  c.network.decoder_channels = get<int>(n, "decoder_channels");
  c.network.cls_avg_pool = get<int>(n, "cls_avg_pool");
  c.network.cls_max_pool = get<int>(n, "cls_max_pool");
  c.network.hidden_units = get<int>(n, "hidden_units");
  const json& l = j.at("loss");
  c.train.loss.alpha1 = get<double>(l, "alpha1");
  c.train.loss.alpha2 = get<double>(l, "alpha2");
  c.train.loss.epsilon = get<double>(l, "epsilon");
  const json& o = j.at("optimizer");
  c.train.optimizer.rho = get<double>(o, "rho");
  c.train.optimizer.eps = get<double>(o, "eps");
  c.train.optimizer.lr = get<double>(o, "lr");
  const json& a = j.at("augment");
  c.train.augment.horizontal_flip = get<bool>(a, "horizontal_flip");
  c.train.augment.rotation_deg = get<double>(a, "rotation_deg");
  c.train.augment.noise_variance = get<double>(a, "noise_variance");
  c.train.augment.copies_per_scan = get<int>(a, "copies_per_scan");
  const json& t = j.at("train");
  c.train.epochs = get<int>(t, "epochs");
  c.train.iters_per_epoch = get<int>(t, "iters_per_epoch");
  c.train.batch_size = get<int>(t, "batch_size");
  c.train.seg_weight = get<double>(t, "seg_weight");
  c.train.cls_weight = get<double>(t, "cls_weight");
  c.train.balance_classes = get<bool>(t, "balance_classes");
  c.svm.lambda = get<double>(j.at("svm"), "lambda");
  c.svm.epochs = get<int>(j.at("svm"), "epochs");
  c.threshold.rnfl_threshold_um = get<double>(j.at("threshold"), "rnfl_threshold_um");
  c.train.seed = c.seed;
  c.train.train_fraction = c.train_fraction;
  c.train.stratified = c.stratified;
  c.svm.seed = derive_seed(c.seed, 20);
  c.validate();
  return c;
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("bad " + what + " JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Stage plumbing

// Runs `body` with a STALE marker in `dir` that is removed only on success.
// Failures other than library errors are tagged with the stage name.
template <typename F>
void stage(const fs::path& dir, const std::string& name, F&& body) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  io::write_text(name + " stage incomplete\n", dir / "STALE");
  try {
    body();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
  fs::remove(dir / "STALE", ec);
}

std::vector<std::string> ids_of(const Manifest& m, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(m.records[i].id());
  return out;
}

std::map<std::string, std::size_t> index_by_id(const Manifest& m) {
  std::map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < m.records.size(); ++i) out[m.records[i].id()] = i;
  return out;
}

struct GradeRow {
  std::string id;
  double probability = 0.0;
  bool screened = false;
  std::optional<GradeLabel> svm;
  double margin = 0.0;
  std::optional<GradeLabel> threshold;
  std::optional<GradeLabel> final_grade;
};

const char* kGradesHeader = "id,glaucoma_probability,screened,svm_grade,svm_margin,threshold_grade,final_grade";

std::string grade_text(const std::optional<GradeLabel>& g) { return g ? std::string(to_string(*g)) : ""; }

std::vector<GradeRow> read_grades(const fs::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) || trim(line) != kGradesHeader) throw FormatError("bad grades header in " + path.string());
  std::vector<GradeRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw FormatError("bad grades row: " + line);
    GradeRow r;
    r.id = f[0];
    try {
      r.probability = std::stod(f[1]);
      r.margin = f[4].empty() ? 0.0 : std::stod(f[4]);
    } catch (const std::exception&) {
      throw FormatError("bad number in grades row: " + line);
    }
    r.screened = f[2] == "1";
    if (!f[3].empty()) r.svm = grade_or_throw(f[3], path.string());
    if (!f[5].empty()) r.threshold = grade_or_throw(f[5], path.string());
    if (!f[6].empty()) r.final_grade = grade_or_throw(f[6], path.string());
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

std::string ManifestRecord::id() const { return scan.stem().string(); }

Manifest parse_manifest(std::string_view text, const fs::path& base_dir) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty manifest");
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  static const std::set<std::string> known{"scan",       "mask",       "grade",      "split",
                                           "clinician1", "clinician2", "clinician3", "clinician4"};
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!known.count(header[i])) throw FormatError("unknown manifest column '" + header[i] + "'");
    col[header[i]] = i;
  }
  if (!col.count("scan")) throw FormatError("manifest has no 'scan' column");
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : (base_dir / path).lexically_normal();
  };
  Manifest m;
  std::set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto f = split_csv(line);
    f.resize(std::max(f.size(), header.size()));
    if (f.size() > header.size()) throw FormatError("manifest line " + std::to_string(line_no) + " has extra fields");
    const std::string where = "manifest line " + std::to_string(line_no);
    auto field = [&](const char* name) -> std::string { return col.count(name) ? f[col[name]] : std::string(); };
    ManifestRecord r;
    if (field("scan").empty()) throw FormatError(where + " has no scan path");
    r.scan = resolve(field("scan"));
    if (!field("mask").empty()) r.mask = resolve(field("mask"));
    if (!field("grade").empty()) r.grade = grade_or_throw(field("grade"), where);
    const std::string split = field("split");
    if (split == "train") {
      r.split = SplitPart::Train;
    } else if (split == "test") {
      r.split = SplitPart::Test;
    } else if (!split.empty()) {
      throw FormatError(where + ": split must be 'train' or 'test'");
    }
    for (int k = 0; k < kClinicians; ++k) {
      const std::string g = field(("clinician" + std::to_string(k + 1)).c_str());
      if (!g.empty()) r.clinicians[static_cast<std::size_t>(k)] = grade_or_throw(g, where);
    }
    if (!seen.insert(r.id()).second) throw ValidationError("duplicate scan id '" + r.id() + "' in manifest");
    m.records.push_back(std::move(r));
  }
  if (m.records.empty()) throw ValidationError("manifest lists no scans");
  return m;
}

Manifest load_manifest(const fs::path& path) {
  return parse_manifest(io::read_text(path), fs::absolute(path).parent_path());
}

void save_manifest(const Manifest& m, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  auto rel = [&](const fs::path& p) {
    const fs::path r = p.lexically_relative(base);
    return (r.empty() ? p : r).generic_string();
  };
  std::string out = "scan,mask,grade,split,clinician1,clinician2,clinician3,clinician4\n";
  for (const auto& r : m.records) {
    out += rel(r.scan) + ',' + (r.mask ? rel(*r.mask) : "") + ',' + grade_text(r.grade) + ',';
    if (r.split) out += *r.split == SplitPart::Train ? "train" : "test";
    for (const auto& c : r.clinicians) out += ',' + grade_text(c);
    out += '\n';
  }
  io::write_text(out, path);
}

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
  if (!(axial_scale_um > 0.0)) throw ValidationError("axial_scale_um must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train_fraction must lie in (0,1)");
  if (!(screen_threshold >= 0.0 && screen_threshold <= 1.0)) {
    throw ValidationError("screen_threshold must lie in [0,1]");
  }
  preprocess::validate(preprocess);
  if (network.stem_channels < 1 || network.block_channels < 1 || network.block_depth < 1 ||
      network.block_rate < 1 || network.decoder_channels < 1 || network.hidden_units < 1) {
    throw ValidationError("network sizes must be positive");
  }
  train.validate();
  svm.validate();
  threshold.validate();
}

std::string default_config_json() { return to_json(RunConfig{}).dump(2) + "\n"; }

RunConfig parse_config(std::string_view text) {
  json given = parse_json(text, "config");
  const json reference = to_json(RunConfig{});
  check_keys(given, reference, "");
  json merged = reference;
  merged.merge_patch(given);
  return from_json(merged);
}

std::string config_json(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string apply_override(std::string_view text, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ValidationError("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string value(assignment.substr(eq + 1));
  json j = text.empty() ? json::object() : parse_json(text, "config");
  const json reference = to_json(RunConfig{});
  std::string pointer;
  std::istringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) pointer += "/" + part;
  const json::json_pointer ptr(pointer);
  if (!reference.contains(ptr) || reference.at(ptr).is_object()) {
    throw ValidationError("unknown config key '" + key + "'");
  }
  json v = json::parse(value, nullptr, false);
  if (v.is_discarded()) v = value;
  if (!same_kind(v, reference.at(ptr))) {
    throw ValidationError("config key '" + key + "' expects a " + std::string(reference.at(ptr).type_name()));
  }
  j[ptr] = v;
  return j.dump(2) + "\n";
}

RunConfig load_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  std::string text = file ? io::read_text(*file) : std::string("{}");
  for (const auto& o : overrides) text = apply_override(text, o);
  return parse_config(text);
}

Scan read_record_scan(const ManifestRecord& r, const RunConfig& cfg) {
  if (io::read_sidecar(r.scan)) return io::read_scan(r.scan);
  return io::read_scan(r.scan, cfg.axial_scale_um);
}

train::Split assign_split(const Manifest& m, const RunConfig& cfg) {
  const bool all_marked = std::all_of(m.records.begin(), m.records.end(), [](const auto& r) { return r.split.has_value(); });
  if (all_marked) {
    train::Split s;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      (*m.records[i].split == SplitPart::Train ? s.train : s.test).push_back(i);
    }
    if (s.train.empty() || s.test.empty()) throw ValidationError("manifest split leaves an empty partition");
    return s;
  }
  std::vector<int> strata;
  if (cfg.stratified) {
    for (const auto& r : m.records) strata.push_back(r.grade ? ordinal(*r.grade) : -1);
  }
  return train::split_dataset(m.records.size(), cfg.train_fraction, cfg.seed, cfg.stratified ? &strata : nullptr);
}

// ---------------------------------------------------------------------------
// Synthetic dataset

Manifest write_synthetic_dataset(const fs::path& dir, const SynthDatasetOptions& opts) {
  if (opts.healthy < 0 || opts.early < 0 || opts.advanced < 0 || opts.healthy + opts.early + opts.advanced == 0) {
    throw ValidationError("cohort counts must be non-negative and not all zero");
  }
  if (!(opts.clinician_disagreement >= 0.0 && opts.clinician_disagreement <= 1.0)) {
    throw ValidationError("clinician disagreement must lie in [0,1]");
  }
  const auto samples = generate_cohorts({{GradeLabel::Healthy, opts.healthy},
                                         {GradeLabel::EarlyGlaucoma, opts.early},
                                         {GradeLabel::AdvancedGlaucoma, opts.advanced}},
                                        opts.cohort);
  std::mt19937_64 rng(derive_seed(opts.cohort.seed, 77));
  std::bernoulli_distribution disagree(opts.clinician_disagreement);
  std::bernoulli_distribution coin(0.5);
  Manifest m;
  for (const auto& s : samples) {
    ManifestRecord r;
    r.scan = fs::absolute(dir / "scans" / (s.scan.id() + ".png"));
    r.mask = fs::absolute(dir / "masks" / (s.scan.id() + ".png"));
    r.grade = s.grade;
    io::write_scan(s.scan, r.scan);
    io::ScanMetadata meta;
    meta.axial_scale_um_per_px = s.scan.axial_scale();
    meta.id = s.scan.id();
    meta.grade = s.grade;
    meta.scale_assumed = false;
    io::write_sidecar(meta, r.scan);
    io::write_mask(s.mask, *r.mask);
    for (auto& c : r.clinicians) {
      GradeLabel g = s.grade;
      if (disagree(rng)) {
        if (g == GradeLabel::EarlyGlaucoma) {
          g = coin(rng) ? GradeLabel::Healthy : GradeLabel::AdvancedGlaucoma;
        } else {
          g = GradeLabel::EarlyGlaucoma;
        }
      }
      c = g;
    }
    m.records.push_back(std::move(r));
  }
  save_manifest(m, dir / "manifest.csv");
  return m;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

struct RunContext {
  fs::path dir;
  Manifest manifest;
  RunConfig cfg;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

RunContext load_context(const fs::path& dir) {
  if (!fs::exists(dir / "run.json")) throw IoError("no run.json in " + dir.string() + "; start the run with `preprocess`");
  RunContext ctx;
  ctx.dir = dir;
  const json info = parse_json(io::read_text(dir / "run.json"), "run");
  try {
    ctx.manifest = load_manifest(info.at("manifest").get<std::string>());
    ctx.cfg = from_json(info.at("config"));
  } catch (const json::exception& e) {
    throw FormatError("bad run.json: " + std::string(e.what()));
  }
  const json split = parse_json(io::read_text(dir / "split.json"), "split");
  const auto by_id = index_by_id(ctx.manifest);
  for (const auto& [part, out] : {std::pair{"train", &ctx.train}, std::pair{"test", &ctx.test}}) {
    for (const auto& id : split.at(part)) {
      const auto it = by_id.find(id.get<std::string>());
      if (it == by_id.end()) throw ValidationError("split lists unknown scan '" + id.get<std::string>() + "'");
      out->push_back(it->second);
    }
  }
  return ctx;
}

void require_stage(const RunContext& ctx, const std::string& producer, const std::string& consumer) {
  const fs::path d = ctx.dir / producer;
  if (!fs::is_directory(d) || fs::exists(d / "STALE")) {
    throw StageError(consumer, "output of the " + producer + " stage is missing or stale in " + ctx.dir.string() +
                                   "; run `" + producer + "` first");
  }
}

std::string id_of(const RunContext& ctx, std::size_t i) { return ctx.manifest.records[i].id(); }

Scan preprocessed(const RunContext& ctx, std::size_t i) {
  return io::read_scan(ctx.dir / "preprocess" / (ctx.manifest.records[i].id() + ".png"));
}

void check_trainable(const Manifest& m, const std::vector<std::size_t>& train) {
  for (auto i : train) {
    const auto& r = m.records[i];
    if (!r.mask || !r.grade) {
      throw ValidationError("training needs a mask and a grade for every training scan; '" + r.id() +
                            "' lacks one (add mask/grade columns or pass a trained model)");
    }
  }
}

std::map<std::string, double> read_predictions(const fs::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) || trim(line) != "id,glaucoma_probability") {
    throw FormatError("bad predictions header in " + path.string());
  }
  std::map<std::string, double> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 2) throw FormatError("bad predictions row: " + line);
    try {
      out[f[0]] = std::stod(f[1]);
    } catch (const std::exception&) {
      throw FormatError("bad probability in predictions row: " + line);
    }
  }
  return out;
}

}  // namespace

void init_run(const RunOptions& opts, const RunConfig& cfg) {
  cfg.validate();
  const Manifest manifest = load_manifest(opts.manifest);
  for (const auto& r : manifest.records) {
    if (!fs::exists(r.scan)) throw IoError("scan not found: " + r.scan.string());
    if (r.mask && !fs::exists(*r.mask)) throw IoError("mask not found: " + r.mask->string());
  }
  const train::Split split = assign_split(manifest, cfg);
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec) throw IoError("cannot create " + opts.out_dir.string() + ": " + ec.message());
  const json info = {{"manifest", fs::absolute(opts.manifest).lexically_normal().string()}, {"config", to_json(cfg)}};
  io::write_text(info.dump(2) + "\n", opts.out_dir / "run.json");
  io::write_text(json({{"train", ids_of(manifest, split.train)}, {"test", ids_of(manifest, split.test)}}).dump(2) + "\n",
                 opts.out_dir / "split.json");
}

void preprocess_stage(const fs::path& dir) {
  const RunContext ctx = load_context(dir);
  stage(dir / "preprocess", "preprocess", [&] {
    for (const auto& r : ctx.manifest.records) {
      const Scan s = read_record_scan(r, ctx.cfg);
      const Scan retina = ctx.cfg.preprocess_enabled ? preprocess::extract_retina(s, ctx.cfg.preprocess).retina : s;
      const fs::path p = dir / "preprocess" / (r.id() + ".png");
      io::write_scan(retina, p);
      io::ScanMetadata meta;
      meta.axial_scale_um_per_px = s.axial_scale();
      meta.id = r.id();
      meta.grade = r.grade;
      meta.scale_assumed = !io::read_sidecar(r.scan).has_value();
      io::write_sidecar(meta, p);
    }
  });
}

void train_stage(const fs::path& dir, const std::optional<fs::path>& model) {
  const RunContext ctx = load_context(dir);
  if (!model) check_trainable(ctx.manifest, ctx.train);
  require_stage(ctx, "preprocess", "train");
  stage(dir / "train", "train", [&] {
    fs::remove(dir / "train" / "history.csv");
    nn::Network net;
    if (model) {
      net = nn::load_network(*model);
    } else {
      std::vector<train::TrainSample> data;
      std::vector<std::size_t> idx;
      for (auto i : ctx.train) {
        const auto& r = ctx.manifest.records[i];
        Scan s = preprocessed(ctx, i);
        LayerMask m = io::read_mask(*r.mask, s);
        data.push_back({std::move(s), std::move(m), *r.grade});
        idx.push_back(data.size() - 1);
      }
      nn::ToyNetOptions o = ctx.cfg.network;
      o.height = data.front().scan.height();
      o.width = data.front().scan.width();
      net = nn::Network(nn::toy_network(o), derive_seed(ctx.cfg.seed, 10));
      const auto history = train::fit(net, data, idx, ctx.cfg.train);
      io::write_text(train::history_csv(history), dir / "train" / "history.csv");
    }
    nn::save_network(net, dir / "train" / "model.bin");
  });
}

void segment_stage(const fs::path& dir) {
  const RunContext ctx = load_context(dir);
  require_stage(ctx, "preprocess", "segment");
  require_stage(ctx, "train", "segment");
  stage(dir / "segment", "segment", [&] {
    const nn::Network net = nn::load_network(dir / "train" / "model.bin");
    const nn::Shape in = net.input_shape(1);
    std::vector<Scan> scans;
    for (auto i : ctx.test) {
      scans.push_back(preprocessed(ctx, i));
      const Scan& s = scans.back();
      if (s.height() != in.h || s.width() != in.w) {
        throw ValidationError("scan '" + id_of(ctx, i) + "' is " + std::to_string(s.width()) + "x" +
                              std::to_string(s.height()) + " but the network expects " + std::to_string(in.w) +
                              "x" + std::to_string(in.h));
      }
    }
    const auto preds = segment::predict(net, scans);
    std::string csv = "id,glaucoma_probability\n";
    for (std::size_t k = 0; k < ctx.test.size(); ++k) {
      const std::string id = id_of(ctx, ctx.test[k]);
      io::write_mask(preds[k].mask, dir / "segment" / (id + ".png"));
      csv += id + ',' + fmt(preds[k].glaucoma_probability) + '\n';
    }
    io::write_text(csv, dir / "segment" / "predictions.csv");
  });
}

void profile_stage(const fs::path& dir) {
  const RunContext ctx = load_context(dir);
  require_stage(ctx, "segment", "profile");
  stage(dir / "profiles", "profile", [&] {
    for (auto i : ctx.test) {
      const std::string id = id_of(ctx, i);
      const double scale = preprocessed(ctx, i).axial_scale();
      const auto p = profiles::thickness(io::read_mask(dir / "segment" / (id + ".png")), scale);
      io::write_text(profiles::profile_csv(p), dir / "profiles" / (id + ".csv"));
      // No valid column: the scan stays ungraded.
      const fs::path fj = dir / "profiles" / (id + ".json");
      fs::remove(fj);
      if (p.valid_count() > 0) io::write_text(profiles::features_json(profiles::grade_features(p)), fj);
    }
  });
}

void grade_stage(const fs::path& dir) {
  const RunContext ctx = load_context(dir);
  require_stage(ctx, "segment", "grade");
  require_stage(ctx, "profiles", "grade");
  stage(dir / "grade", "grade", [&] {
    // SVM fit on ground-truth profiles of the glaucomatous training scans.
    std::vector<profiles::GradeFeatures> fx;
    std::vector<GradeLabel> fy;
    for (auto i : ctx.train) {
      const auto& r = ctx.manifest.records[i];
      if (!r.mask || !r.grade || !is_glaucomatous(*r.grade)) continue;
      const Scan s = preprocessed(ctx, i);
      const auto p = profiles::thickness(io::read_mask(*r.mask, s), s.axial_scale());
      if (p.valid_count() == 0) continue;
      fx.push_back(profiles::grade_features(p));
      fy.push_back(*r.grade);
    }
    const bool both = std::count(fy.begin(), fy.end(), GradeLabel::EarlyGlaucoma) > 0 &&
                      std::count(fy.begin(), fy.end(), GradeLabel::AdvancedGlaucoma) > 0;
    if (!both) throw StageError("grade", "SVM training needs early and advanced training scans with masks");
    const grading::SvmModel svm = grading::svm_train(fx, fy, ctx.cfg.svm);
    io::write_text(grading::svm_to_json(svm), dir / "grade" / "svm.json");

    const auto probs = read_predictions(dir / "segment" / "predictions.csv");
    std::string csv = std::string(kGradesHeader) + "\n";
    for (auto i : ctx.test) {
      GradeRow row;
      row.id = id_of(ctx, i);
      const auto pit = probs.find(row.id);
      if (pit == probs.end()) throw FormatError("predictions.csv has no row for '" + row.id + "'");
      row.probability = pit->second;
      row.screened = row.probability >= ctx.cfg.screen_threshold;
      const fs::path fj = dir / "profiles" / (row.id + ".json");
      if (!row.screened) {
        row.final_grade = GradeLabel::Healthy;
      } else if (fs::exists(fj)) {
        const auto f = profiles::parse_features_json(io::read_text(fj));
        const auto sp = grading::svm_predict(svm, f);
        row.svm = sp.label;
        row.margin = sp.margin;
        row.threshold = grading::threshold_grade(f, ctx.cfg.threshold);
        row.final_grade = sp.label;
      }
      csv += row.id + ',' + fmt(row.probability) + ',' + (row.screened ? "1" : "0") + ',' + grade_text(row.svm) +
             ',' + (row.svm ? fmt(row.margin) : "") + ',' + grade_text(row.threshold) + ',' +
             grade_text(row.final_grade) + '\n';
    }
    io::write_text(csv, dir / "grade" / "grades.csv");
  });
}

metrics::MetricReport evaluate_stage(const fs::path& dir) {
  metrics::MetricReport report;
  stage(dir / "evaluate", "evaluate", [&] {
    report = evaluate_run(dir);
    io::write_text(metrics::report_json(report), dir / "evaluate" / "report.json");
  });
  return report;
}

metrics::MetricReport run(const RunOptions& opts, const RunConfig& cfg) {
  cfg.validate();
  if (!opts.model) {
    const Manifest m = load_manifest(opts.manifest);
    check_trainable(m, assign_split(m, cfg).train);
  }
  init_run(opts, cfg);
  preprocess_stage(opts.out_dir);
  train_stage(opts.out_dir, opts.model);
  segment_stage(opts.out_dir);
  profile_stage(opts.out_dir);
  grade_stage(opts.out_dir);
  return evaluate_stage(opts.out_dir);
}

metrics::MetricReport evaluate_run(const fs::path& dir) {
  const RunContext ctx = load_context(dir);
  require_stage(ctx, "segment", "evaluate");
  require_stage(ctx, "grade", "evaluate");
  const auto rows = read_grades(dir / "grade" / "grades.csv");
  std::map<std::string, GradeRow> row_of;
  for (const auto& r : rows) row_of[r.id] = r;

  std::vector<bool> truth, screened;
  std::vector<double> scores;
  std::vector<LayerMask> pred_masks, gt_masks;
  std::vector<double> final_ord, true_ord;
  int svm_ok = 0, thr_ok = 0, graded = 0;
  for (auto i : ctx.test) {
    const ManifestRecord& rec = ctx.manifest.records[i];
    const std::string id = rec.id();
    const auto rit = row_of.find(id);
    if (rit == row_of.end()) throw FormatError("grades.csv has no row for '" + id + "'");
    const GradeRow& row = rit->second;
    if (rec.mask) {
      const LayerMask pred = io::read_mask(dir / "segment" / (id + ".png"));
      const LayerMask gt = io::read_mask(*rec.mask);
      if (pred.height() != gt.height() || pred.width() != gt.width()) {
        throw ValidationError("predicted and ground-truth masks differ in size for '" + id + "'");
      }
      pred_masks.push_back(pred);
      gt_masks.push_back(gt);
    }
    if (!rec.grade) continue;
    truth.push_back(is_glaucomatous(*rec.grade));
    screened.push_back(row.screened);
    scores.push_back(row.probability);
    if (row.final_grade) {
      final_ord.push_back(ordinal(*row.final_grade));
      true_ord.push_back(ordinal(*rec.grade));
    }
    if (is_glaucomatous(*rec.grade) && row.svm) {
      ++graded;
      svm_ok += *row.svm == *rec.grade;
      thr_ok += row.threshold && *row.threshold == *rec.grade;
    }
  }

  metrics::MetricReport report;
  if (!truth.empty()) report.confusion = metrics::confusion_metrics(metrics::count_confusion(truth, screened));
  const auto positives = std::count(truth.begin(), truth.end(), true);
  if (positives > 0 && positives < static_cast<std::ptrdiff_t>(truth.size())) report.roc = metrics::roc(scores, truth);
  if (!pred_masks.empty()) report.segmentation = metrics::score_segmentation(pred_masks, gt_masks);
  if (final_ord.size() >= 3) {
    try {
      report.correlation = metrics::pearson(final_ord, true_ord);
    } catch (const ValidationError&) {
      // zero variance: correlation left undefined
    }
  }
  if (graded > 0) {
    report.extra.emplace_back("grading_accuracy", static_cast<double>(svm_ok) / graded);
    report.extra.emplace_back("threshold_grading_accuracy", static_cast<double>(thr_ok) / graded);
    report.extra.emplace_back("graded_scans", graded);
  }
  report.extra.emplace_back("seed", static_cast<double>(ctx.cfg.seed));
  report.extra.emplace_back("test_scans", static_cast<double>(ctx.test.size()));
  return report;
}

// ---------------------------------------------------------------------------
// Clinician agreement

std::vector<ClinicianAgreement> clinician_agreement(
    const Manifest& m, const std::vector<std::pair<std::string, GradeLabel>>& predictions) {
  std::map<std::string, GradeLabel> pred(predictions.begin(), predictions.end());
  std::vector<ClinicianAgreement> rows;
  for (int k = 0; k < kClinicians; ++k) {
    ClinicianAgreement a;
    a.clinician = k + 1;
    std::vector<double> x, y;
    for (const auto& r : m.records) {
      const auto it = pred.find(r.id());
      const auto& c = r.clinicians[static_cast<std::size_t>(k)];
      if (it == pred.end() || !c) continue;
      x.push_back(ordinal(it->second));
      y.push_back(ordinal(*c));
    }
    if (x.size() < 3) {
      a.reason = "fewer than 3 scans with both a prediction and this clinician's grade";
    } else {
      try {
        a.result = metrics::pearson(x, y);
      } catch (const ValidationError&) {
        a.reason = "zero variance in predictions or clinician grades";
      }
    }
    rows.push_back(std::move(a));
  }
  return rows;
}

std::string agreement_json(const std::vector<ClinicianAgreement>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json j = {{"clinician", r.clinician}};
    if (r.result) {
      j["r"] = r.result->r;
      j["p"] = r.result->p_value;
      j["n"] = r.result->n;
    } else {
      j["r"] = nullptr;
      j["p"] = nullptr;
      j["undefined"] = r.reason;
    }
    arr.push_back(j);
  }
  return json({{"clinicians", arr}}).dump(2) + "\n";
}

std::string agreement_csv(const std::vector<ClinicianAgreement>& rows) {
  std::string out = "clinician,r,p,n,note\n";
  for (const auto& r : rows) {
    out += std::to_string(r.clinician) + ',';
    if (r.result) {
      out += fmt(r.result->r) + ',' + fmt(r.result->p_value) + ',' + std::to_string(r.result->n) + ',';
    } else {
      out += ",,," + r.reason;
    }
    out += '\n';
  }
  return out;
}

std::vector<std::pair<std::string, GradeLabel>> read_final_grades(const fs::path& grades_csv) {
  std::vector<std::pair<std::string, GradeLabel>> out;
  for (const auto& r : read_grades(grades_csv)) {
    if (r.final_grade) out.emplace_back(r.id, *r.final_grade);
  }
  return out;
}

}  // namespace rgc::pipeline
