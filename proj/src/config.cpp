#include "polyrep/config.hpp"

#include <fstream>
#include <set>

namespace polyrep {
namespace {

using nlohmann::json;

// Reads keys out of one JSON object and rejects any it did not consume.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) {
      obj_ = root.at(name_);
      if (!obj_.is_object()) throw Error(ErrorKind::kConfig, "config section '" + name_ + "' must be an object");
    } else {
      obj_ = json::object();
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kConfig, "config key " + name_ + "." + key + ": " + e.what());
    }
  }

  const json* raw(const char* key) {
    used_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!used_.count(key)) throw Error(ErrorKind::kConfig, "unknown config key " + name_ + "." + key);
    }
  }

 private:
  std::string name_;
  json obj_;
  std::set<std::string> used_;
};

const std::set<std::string> kSections = {"run",        "dataset", "synthetic", "sampler",
                                         "imageproc",  "encoder", "train",     "radiomics",
                                         "fusion",     "classifier", "explain", "report"};

const std::set<std::string> kBlockNames = {"siamese", "selfsup", "radiomics", "tabular"};

void check_blocks(const std::vector<std::string>& blocks, const std::string& where) {
  if (blocks.empty()) throw Error(ErrorKind::kConfig, where + " enables no blocks");
  for (const auto& b : blocks) {
    if (!kBlockNames.count(b)) throw Error(ErrorKind::kConfig, where + ": unknown block '" + b + "'");
  }
}

std::string classifier_kind_name(mlab::ClassifierKind k) {
  return k == mlab::ClassifierKind::kLogistic ? "logistic" : "boosted_trees";
}

}  // namespace

std::vector<ReportConfiguration> default_report_configurations() {
  return {{"all", {"siamese", "tabular", "radiomics", "selfsup"}},
          {"siamese+radiomics+selfsup", {"siamese", "radiomics", "selfsup"}},
          {"selfsup-only", {"selfsup"}},
          {"radiomics-only", {"radiomics"}},
          {"siamese-only", {"siamese"}},
          {"tabular-only", {"tabular"}}};
}

SyntheticSpec default_synthetic_spec() {
  SyntheticSpec spec;
  spec.labels = {{"texture_var", SignalCarrier::kTexture, 0.4},
                 {"texture_mean", SignalCarrier::kTexture, 0.4},
                 {"spot_a", SignalCarrier::kSpatial, 0.4},
                 {"spot_b", SignalCarrier::kSpatial, 0.4},
                 {"senior", SignalCarrier::kAge, 0.4},
                 {"latent", SignalCarrier::kSelfsup, 0.4}};
  return spec;
}

void Config::propagate_seed() {
  sampler.seed = run.seed;
  train.seed = run.seed;
  imageproc.augment_cfg.seed = run.seed;
  classifier.seed = run.seed;
}

void Config::validate() const {
  if (run.name.empty()) throw Error(ErrorKind::kConfig, "run.name must not be empty");
  if (run.threads < 1) throw Error(ErrorKind::kConfig, "run.threads must be >= 1");
  if (dataset.source != "synthetic" && dataset.source != "manifest") {
    throw Error(ErrorKind::kConfig, "dataset.source must be 'synthetic' or 'manifest'");
  }
  if (dataset.source == "manifest" && dataset.manifest.empty()) {
    throw Error(ErrorKind::kConfig, "dataset.manifest is required when dataset.source is 'manifest'");
  }
  if (dataset.min_label_count < 1) throw Error(ErrorKind::kConfig, "dataset.min_label_count must be >= 1");
  if (dataset.split_ratio.first < 1 || dataset.split_ratio.second < 1) {
    throw Error(ErrorKind::kConfig, "dataset.split_ratio components must be positive");
  }
  if (dataset.n_folds < 2) throw Error(ErrorKind::kConfig, "dataset.n_folds must be >= 2");
  if (sampler.search_limit < 1) throw Error(ErrorKind::kConfig, "sampler.search_limit must be >= 1");
  if (imageproc.size < 8) throw Error(ErrorKind::kConfig, "imageproc.size must be >= 8");
  if (imageproc.size % encoder.patch != 0) {
    throw Error(ErrorKind::kConfig, "imageproc.size must be a multiple of encoder.patch");
  }
  train.validate();
  radiomics.validate();
  classifier.validate();
  if (fusion.knn_k < 1) throw Error(ErrorKind::kConfig, "fusion.knn_k must be >= 1");
  if (fusion.selfsup_dim < 1) throw Error(ErrorKind::kConfig, "fusion.selfsup_dim must be >= 1");
  check_blocks(fusion.blocks, "fusion.blocks");
  if (explain.n_repeats < 1) throw Error(ErrorKind::kConfig, "explain.n_repeats must be >= 1");
  if (explain.visualize_side < 0) throw Error(ErrorKind::kConfig, "explain.visualize_side must be >= 0");
  for (const auto& rc : report) check_blocks(rc.blocks, "report configuration '" + rc.name + "'");
}

Config config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "config root must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!kSections.count(key)) throw Error(ErrorKind::kConfig, "unknown config section '" + key + "'");
  }
  Config c;
  c.synthetic = default_synthetic_spec();
  c.report = default_report_configurations();

  Section run(j, "run");
  run.get("name", c.run.name);
  run.get("root", c.run.root);
  run.get("seed", c.run.seed);
  run.get("threads", c.run.threads);
  run.finish();

  Section ds(j, "dataset");
  ds.get("source", c.dataset.source);
  ds.get("manifest", c.dataset.manifest);
  ds.get("selfsup_path", c.dataset.selfsup_path);
  ds.get("min_label_count", c.dataset.min_label_count);
  ds.get("split_ratio", c.dataset.split_ratio);
  ds.get("n_folds", c.dataset.n_folds);
  ds.finish();

  Section syn(j, "synthetic");
  syn.get("image_size", c.synthetic.image_size);
  syn.get("n_samples", c.synthetic.n_samples);
  if (const json* labels = syn.raw("labels")) {
    if (!labels->is_array()) throw Error(ErrorKind::kConfig, "synthetic.labels must be an array");
    c.synthetic.labels.clear();
    for (const json& l : *labels) {
      SyntheticLabel sl;
      for (const auto& [key, value] : l.items()) {
        if (key == "name") {
          sl.name = value.get<std::string>();
        } else if (key == "carrier") {
          sl.carrier = parse_carrier(value.get<std::string>());
        } else if (key == "prevalence") {
          sl.prevalence = value.get<double>();
        } else {
          throw Error(ErrorKind::kConfig, "unknown config key synthetic.labels[]." + key);
        }
      }
      c.synthetic.labels.push_back(sl);
    }
  }
  syn.get("spatial_in_channel3", c.synthetic.spatial_in_channel3);
  syn.get("texture_sigma", c.synthetic.texture_sigma);
  syn.get("texture_ratio", c.synthetic.texture_ratio);
  syn.get("texture_shift", c.synthetic.texture_shift);
  syn.get("blob_amplitude", c.synthetic.blob_amplitude);
  syn.get("age_threshold", c.synthetic.age_threshold);
  syn.get("selfsup_dim", c.synthetic.selfsup_dim);
  syn.get("selfsup_shift", c.synthetic.selfsup_shift);
  syn.finish();

  Section smp(j, "sampler");
  smp.get("search_limit", c.sampler.search_limit);
  smp.get("skip_unshared", c.sampler.skip_unshared);
  smp.finish();

  Section ip(j, "imageproc");
  std::string mode = imageproc::channel3_mode_name(c.imageproc.channel3);
  ip.get("channel3", mode);
  c.imageproc.channel3 = imageproc::parse_channel3_mode(mode);
  ip.get("size", c.imageproc.size);
  ip.get("suppression_radius", c.imageproc.suppression_radius);
  ip.get("augment", c.imageproc.augment);
  ip.get("max_shift_frac", c.imageproc.augment_cfg.max_shift_frac);
  ip.get("max_scale_frac", c.imageproc.augment_cfg.max_scale_frac);
  ip.get("max_rotate_deg", c.imageproc.augment_cfg.max_rotate_deg);
  ip.get("noise_sigma", c.imageproc.augment_cfg.noise_sigma);
  ip.get("distortion_strength", c.imageproc.augment_cfg.distortion_strength);
  ip.finish();

  Section enc(j, "encoder");
  enc.get("patch", c.encoder.patch);
  enc.get("hidden", c.encoder.hidden);
  enc.get("embedding_dim", c.encoder.embedding_dim);
  enc.get("l2_normalize", c.encoder.l2_normalize);
  enc.finish();

  Section tr(j, "train");
  tr.get("lr0", c.train.lr0);
  tr.get("batch_size", c.train.batch_size);
  tr.get("max_epochs", c.train.max_epochs);
  tr.get("lr_half_every", c.train.lr_half_every);
  tr.get("early_stop_patience", c.train.early_stop_patience);
  tr.get("w_siamese", c.train.w_siamese);
  tr.get("w_classif", c.train.w_classif);
  tr.get("margin", c.train.margin);
  tr.finish();

  Section rad(j, "radiomics");
  rad.get("gray_levels", c.radiomics.gray_levels);
  rad.get("glcm_offsets", c.radiomics.glcm_offsets);
  rad.get("symmetric", c.radiomics.symmetric);
  rad.get("firstorder", c.radiomics.firstorder);
  rad.get("shape", c.radiomics.shape);
  rad.get("glcm", c.radiomics.glcm);
  rad.finish();

  Section fu(j, "fusion");
  fu.get("knn_k", c.fusion.knn_k);
  fu.get("selfsup_dim", c.fusion.selfsup_dim);
  fu.get("blocks", c.fusion.blocks);
  fu.finish();

  Section cl(j, "classifier");
  std::string kind = classifier_kind_name(c.classifier.kind);
  cl.get("kind", kind);
  if (kind == "boosted_trees") {
    c.classifier.kind = mlab::ClassifierKind::kBoostedTrees;
  } else if (kind == "logistic") {
    c.classifier.kind = mlab::ClassifierKind::kLogistic;
  } else {
    throw Error(ErrorKind::kConfig, "classifier.kind must be 'boosted_trees' or 'logistic'");
  }
  cl.get("n_rounds", c.classifier.n_rounds);
  cl.get("max_depth", c.classifier.max_depth);
  cl.get("learning_rate", c.classifier.learning_rate);
  cl.get("min_samples_leaf", c.classifier.min_samples_leaf);
  cl.get("threshold", c.classifier.threshold);
  cl.get("l2", c.classifier.l2);
  cl.finish();

  Section ex(j, "explain");
  ex.get("n_repeats", c.explain.n_repeats);
  ex.get("visualize_side", c.explain.visualize_side);
  ex.finish();

  Section rep(j, "report");
  if (const json* confs = rep.raw("configurations")) {
    if (!confs->is_array()) throw Error(ErrorKind::kConfig, "report.configurations must be an array");
    c.report.clear();
    for (const json& rc : *confs) {
      ReportConfiguration r;
      for (const auto& [key, value] : rc.items()) {
        if (key == "name") {
          r.name = value.get<std::string>();
        } else if (key == "blocks") {
          r.blocks = value.get<std::vector<std::string>>();
        } else {
          throw Error(ErrorKind::kConfig, "unknown config key report.configurations[]." + key);
        }
      }
      c.report.push_back(r);
    }
  }
  rep.finish();

  c.propagate_seed();
  c.validate();
  return c;
}

nlohmann::ordered_json config_to_json(const Config& c) {
  nlohmann::ordered_json j;
  j["run"] = {{"name", c.run.name}, {"root", c.run.root}, {"seed", c.run.seed}, {"threads", c.run.threads}};
  j["dataset"] = {{"source", c.dataset.source},
                  {"manifest", c.dataset.manifest},
                  {"selfsup_path", c.dataset.selfsup_path},
                  {"min_label_count", c.dataset.min_label_count},
                  {"split_ratio", c.dataset.split_ratio},
                  {"n_folds", c.dataset.n_folds}};
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (const auto& l : c.synthetic.labels) {
    labels.push_back({{"name", l.name}, {"carrier", carrier_name(l.carrier)}, {"prevalence", l.prevalence}});
  }
  j["synthetic"] = {{"image_size", c.synthetic.image_size},
                    {"n_samples", c.synthetic.n_samples},
                    {"labels", labels},
                    {"spatial_in_channel3", c.synthetic.spatial_in_channel3},
                    {"texture_sigma", c.synthetic.texture_sigma},
                    {"texture_ratio", c.synthetic.texture_ratio},
                    {"texture_shift", c.synthetic.texture_shift},
                    {"blob_amplitude", c.synthetic.blob_amplitude},
                    {"age_threshold", c.synthetic.age_threshold},
                    {"selfsup_dim", c.synthetic.selfsup_dim},
                    {"selfsup_shift", c.synthetic.selfsup_shift}};
  j["sampler"] = {{"search_limit", c.sampler.search_limit}, {"skip_unshared", c.sampler.skip_unshared}};
  const auto& a = c.imageproc.augment_cfg;
  j["imageproc"] = {{"channel3", imageproc::channel3_mode_name(c.imageproc.channel3)},
                    {"size", c.imageproc.size},
                    {"suppression_radius", c.imageproc.suppression_radius},
                    {"augment", c.imageproc.augment},
                    {"max_shift_frac", a.max_shift_frac},
                    {"max_scale_frac", a.max_scale_frac},
                    {"max_rotate_deg", a.max_rotate_deg},
                    {"noise_sigma", a.noise_sigma},
                    {"distortion_strength", a.distortion_strength}};
  j["encoder"] = {{"patch", c.encoder.patch},
                  {"hidden", c.encoder.hidden},
                  {"embedding_dim", c.encoder.embedding_dim},
                  {"l2_normalize", c.encoder.l2_normalize}};
  j["train"] = {{"lr0", c.train.lr0},
                {"batch_size", c.train.batch_size},
                {"max_epochs", c.train.max_epochs},
                {"lr_half_every", c.train.lr_half_every},
                {"early_stop_patience", c.train.early_stop_patience},
                {"w_siamese", c.train.w_siamese},
                {"w_classif", c.train.w_classif},
                {"margin", c.train.margin}};
  j["radiomics"] = {{"gray_levels", c.radiomics.gray_levels},
                    {"glcm_offsets", c.radiomics.glcm_offsets},
                    {"symmetric", c.radiomics.symmetric},
                    {"firstorder", c.radiomics.firstorder},
                    {"shape", c.radiomics.shape},
                    {"glcm", c.radiomics.glcm}};
  j["fusion"] = {{"knn_k", c.fusion.knn_k}, {"selfsup_dim", c.fusion.selfsup_dim}, {"blocks", c.fusion.blocks}};
  j["classifier"] = {{"kind", classifier_kind_name(c.classifier.kind)},
                     {"n_rounds", c.classifier.n_rounds},
                     {"max_depth", c.classifier.max_depth},
                     {"learning_rate", c.classifier.learning_rate},
                     {"min_samples_leaf", c.classifier.min_samples_leaf},
                     {"threshold", c.classifier.threshold},
                     {"l2", c.classifier.l2}};
  j["explain"] = {{"n_repeats", c.explain.n_repeats}, {"visualize_side", c.explain.visualize_side}};
  nlohmann::ordered_json confs = nlohmann::ordered_json::array();
  for (const auto& rc : c.report) confs.push_back({{"name", rc.name}, {"blocks", rc.blocks}});
  j["report"] = {{"configurations", confs}};
  return j;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq) {
    throw Error(ErrorKind::kConfig, "override must look like section.key=value: '" + assignment + "'");
  }
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  if (!j.contains(section)) j[section] = json::object();
  j[section][key] = value;
}

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kIo, "cannot open config " + path.string());
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParse, path.string() + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

std::uint64_t config_hash(const Config& cfg) {
  auto j = config_to_json(cfg);
  j["run"].erase("threads");
  return fnv1a64(j.dump());
}

}  // namespace polyrep
