#include "polyrep/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <map>
#include <set>

#include "polyrep/image_io.hpp"

namespace polyrep::pipeline {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr double kPgmScale = 30000.0;  // synthetic intensities stay well below 2

const std::vector<std::string> kBlockOrder = {"siamese", "selfsup", "radiomics", "tabular"};

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, path.string() + ": " + e.what());
  }
}

void write_images(const fs::path& path, const std::vector<imageproc::ThreeChannelImage>& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const std::uint32_t n = static_cast<std::uint32_t>(images.size());
  const std::uint32_t size = images.empty() ? 0 : static_cast<std::uint32_t>(images[0].rows());
  out.write("PRIM", 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&size), 4);
  for (const auto& img : images) {
    for (const Image& c : img.channels) {
      for (Eigen::Index y = 0; y < c.rows(); ++y) {
        for (Eigen::Index x = 0; x < c.cols(); ++x) {
          const double v = c(y, x);
          out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
      }
    }
  }
}

std::vector<imageproc::ThreeChannelImage> read_images(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  char magic[4];
  std::uint32_t n = 0, size = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&size), 4);
  if (!in || std::string(magic, 4) != "PRIM") throw Error(ErrorKind::kParse, path.string() + ": not an image stack");
  std::vector<imageproc::ThreeChannelImage> images(n);
  for (auto& img : images) {
    for (Image& c : img.channels) {
      c.resize(size, size);
      for (Eigen::Index y = 0; y < c.rows(); ++y) {
        for (Eigen::Index x = 0; x < c.cols(); ++x) in.read(reinterpret_cast<char*>(&c(y, x)), sizeof(double));
      }
    }
  }
  if (!in) throw Error(ErrorKind::kParse, path.string() + ": truncated image stack");
  return images;
}

std::vector<std::string> sample_ids(const Dataset& data) {
  std::vector<std::string> ids;
  for (const auto& s : data.samples) ids.push_back(s.id);
  return ids;
}

std::vector<std::string> used_blocks(const Config& cfg) {
  std::set<std::string> used(cfg.fusion.blocks.begin(), cfg.fusion.blocks.end());
  for (const auto& rc : cfg.report) used.insert(rc.blocks.begin(), rc.blocks.end());
  std::vector<std::string> out;
  for (const auto& b : kBlockOrder) {
    if (used.count(b)) out.push_back(b);
  }
  return out;
}

void check_rows(const FeatureBlock& block, const std::vector<std::string>& ids) {
  if (block.row_ids != ids) {
    throw Error(ErrorKind::kShapeMismatch, "block '" + block.name + "' rows do not match the ingested samples");
  }
}

}  // namespace

std::vector<imageproc::ThreeChannelImage> preprocess(const Dataset& data, const ImageprocSection& cfg) {
  std::vector<imageproc::ThreeChannelImage> out(data.size());
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = imageproc::make_three_channel(data.samples[i], cfg.channel3, cfg.size, cfg.suppression_radius);
  });
  return out;
}

siamese::EncoderConfig encoder_config(const Config& cfg, int n_labels) {
  siamese::EncoderConfig e;
  e.input_hw = cfg.imageproc.size;
  e.channels_in = 3;
  e.patch = cfg.encoder.patch;
  e.hidden = cfg.encoder.hidden;
  e.embedding_dim = cfg.encoder.embedding_dim;
  e.n_labels = std::max(1, n_labels);
  e.l2_normalize = cfg.encoder.l2_normalize;
  e.seed = cfg.run.seed;
  return e;
}

SplitTriplets split_triplets(const Dataset& data, const TrainValidationSplit& split,
                             const sampler::SamplerConfig& cfg) {
  auto build = [&](const std::vector<std::size_t>& part, std::uint64_t salt) {
    std::vector<LabelSet> labels;
    for (std::size_t i : part) labels.push_back(data.samples[i].labels);
    sampler::SamplerConfig c = cfg;
    c.seed = cfg.seed ^ salt;
    sampler::TripletSet set = sampler::build_triplets(labels, data.vocab.names.size(), c);
    std::vector<sampler::Triplet> out;
    for (sampler::Triplet t : set.triplets) {
      t.anchor = part[t.anchor];
      t.positive = part[t.positive];
      t.negative = part[t.negative];
      out.push_back(t);
    }
    return out;
  };
  return {build(split.train, 0), build(split.validation, 0x9e3779b97f4a7c15ULL)};
}

siamese::TrainResult train_siamese(const Dataset& data,
                                   const std::vector<imageproc::ThreeChannelImage>& images,
                                   const SplitTriplets& triplets, const Config& cfg) {
  if (triplets.train.empty()) throw Error(ErrorKind::kInvalidArgument, "no training triplets could be formed");
  siamese::TrainConfig tc = cfg.train;
  if (cfg.imageproc.augment) tc.augment = cfg.imageproc.augment_cfg;
  return siamese::train(triplets.train, triplets.validation, images, data.label_matrix(),
                        encoder_config(cfg, static_cast<int>(data.vocab.names.size())), tc);
}

FeatureBlock reduce_selfsup(const FeatureBlock& raw, int target_dim, int knn_k) {
  const FeatureBlock complete = raw.has_missing() ? fusion::knn_impute(raw, knn_k) : raw;
  const int limit = static_cast<int>(std::min<Eigen::Index>(complete.rows() - 1, complete.cols()));
  const int dim = std::max(1, std::min(target_dim, limit));
  fusion::MdsResult mds = fusion::mds_reduce(complete, dim);
  if (mds.dropped > 0) {
    warn("MDS dropped " + std::to_string(mds.dropped) + " dimensions with negative eigenvalues");
  }
  mds.block.name = "selfsup";
  mds.block.provenance = Provenance::kSelfsup;
  mds.block.column_names = indexed_names("selfsup", mds.block.cols());
  return mds.block;
}

fusion::Polyrepresentation select_blocks(const fusion::Polyrepresentation& poly,
                                         const std::vector<std::string>& names) {
  if (names.empty()) throw Error(ErrorKind::kInvalidArgument, "no blocks selected");
  fusion::Polyrepresentation out;
  out.row_ids = poly.row_ids;
  out.labels = poly.labels;
  out.label_names = poly.label_names;
  Eigen::Index width = 0;
  for (const auto& n : names) width += poly.span(n).width;
  out.raw.resize(poly.raw.rows(), width);
  out.fused.resize(poly.fused.rows(), width);
  Eigen::Index at = 0;
  for (const auto& n : names) {
    const fusion::BlockSpan& s = poly.span(n);
    out.raw.middleCols(at, s.width) = poly.raw.middleCols(s.begin, s.width);
    out.fused.middleCols(at, s.width) = poly.fused.middleCols(s.begin, s.width);
    for (Eigen::Index c = 0; c < s.width; ++c) out.column_names.push_back(poly.column_names[s.begin + c]);
    out.spans.push_back({s.name, s.provenance, at, s.width});
    at += s.width;
  }
  return out;
}

double cv_accuracy_with_images(const Dataset& data, const std::vector<imageproc::ThreeChannelImage>& images,
                               const TrainValidationSplit& split, const FoldAssignment& folds,
                               const std::vector<FeatureBlock>& fixed, const std::vector<std::string>& blocks,
                               const Config& cfg) {
  const SplitTriplets triplets = split_triplets(data, split, cfg.sampler);
  const siamese::TrainResult trained = train_siamese(data, images, triplets, cfg);
  const FeatureBlock sblock = siamese::export_embeddings(trained.encoder, images, sample_ids(data));
  std::vector<FeatureBlock> chosen;
  for (const auto& name : blocks) {
    if (name == "siamese") {
      chosen.push_back(sblock);
      continue;
    }
    auto it = std::find_if(fixed.begin(), fixed.end(), [&](const FeatureBlock& b) { return b.name == name; });
    if (it == fixed.end()) throw Error(ErrorKind::kInvalidArgument, "block '" + name + "' is not available");
    chosen.push_back(*it);
  }
  const auto poly = fusion::assemble(chosen, std::vector<bool>(chosen.size(), true), data.label_matrix(),
                                     data.vocab.names, cfg.fusion.knn_k);
  return mlab::cross_validate(poly, folds, cfg.classifier).mean.subset_accuracy;
}

ReportTable compare_configurations(const fusion::Polyrepresentation& poly, const FoldAssignment& folds,
                                   const std::vector<ReportConfiguration>& configurations,
                                   const mlab::BoostConfig& cfg) {
  ReportTable table;
  for (const auto& rc : configurations) {
    table.configurations.push_back(rc.name);
    table.reports.push_back(mlab::cross_validate(select_blocks(poly, rc.blocks), folds, cfg));
  }
  return table;
}

void write_report_csv(const fs::path& path, const ReportTable& table) {
  static const std::vector<std::pair<std::string, double mlab::Metrics::*>> rows = {
      {"Accuracy", &mlab::Metrics::subset_accuracy},
      {"F1 macro", &mlab::Metrics::f1_macro},
      {"F1 weighted", &mlab::Metrics::f1_weighted},
      {"Precision macro", &mlab::Metrics::precision_macro},
      {"Precision weighted", &mlab::Metrics::precision_weighted},
      {"Recall macro", &mlab::Metrics::recall_macro},
      {"Recall weighted", &mlab::Metrics::recall_weighted}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "metric";
  for (const auto& c : table.configurations) out << ',' << c;
  out << '\n';
  for (const auto& [label, field] : rows) {
    out << label;
    for (const auto& r : table.reports) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", r.mean.*field);
      out << ',' << buf;
    }
    out << '\n';
  }
}

// ---- staged runner ----

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {
      "synth", "ingest", "triplets", "preprocess", "train-siamese", "embed", "radiomics", "reduce",
      "fuse", "train-eval", "ablate-channels", "importance", "gradcheck", "report", "e2e"};
  return names;
}

namespace {

const std::map<std::string, std::vector<std::string>>& stage_outputs() {
  static const std::map<std::string, std::vector<std::string>> outputs = {
      {"synth", {"manifest.csv", "selfsup.csv"}},
      {"ingest", {"split.csv", "vocabulary.csv", "ingest.json"}},
      {"triplets", {"triplets.csv", "val_triplets.csv"}},
      {"preprocess", {"images.bin"}},
      {"train-siamese", {"encoder.bin", "history.csv"}},
      {"embed", {"embeddings.csv"}},
      {"radiomics", {"radiomics.csv"}},
      {"reduce", {"selfsup.csv"}},
      {"fuse", {"fused.csv", "fused_raw.csv", "labels.csv", "blocks.json"}},
      {"train-eval", {"metrics.json", "metrics.csv"}},
      {"ablate-channels", {"ablation.csv"}},
      {"importance", {"importance.csv"}},
      {"gradcheck", {"gradcheck.json"}},
      {"report", {"report.csv", "report.json"}}};
  return outputs;
}

// Config sections each stage reads directly, and the stages it reads from.
struct StageInputs {
  std::vector<std::string> sections;
  std::vector<std::string> upstream;
};

const std::map<std::string, StageInputs>& stage_inputs() {
  static const std::map<std::string, StageInputs> inputs = {
      {"synth", {{"dataset", "synthetic"}, {}}},
      {"ingest", {{"dataset"}, {"synth"}}},
      {"triplets", {{"sampler"}, {"ingest"}}},
      {"preprocess", {{"imageproc"}, {"ingest"}}},
      {"train-siamese", {{"encoder", "train", "imageproc"}, {"triplets", "preprocess"}}},
      {"embed", {{}, {"train-siamese"}}},
      {"radiomics", {{"radiomics"}, {"ingest"}}},
      {"reduce", {{"dataset", "fusion", "explain"}, {"ingest"}}},
      {"fuse", {{"fusion", "report"}, {"embed", "reduce", "radiomics"}}},
      {"train-eval", {{"classifier"}, {"fuse"}}},
      {"ablate-channels", {{"classifier", "encoder", "train", "imageproc", "sampler"}, {"fuse"}}},
      {"importance", {{"classifier", "explain"}, {"fuse"}}},
      {"gradcheck", {{"encoder", "train"}, {}}},
      {"report", {{"classifier", "report"}, {"fuse"}}}};
  return inputs;
}

void collect_sections(const std::string& stage, std::set<std::string>& out) {
  const StageInputs& in = stage_inputs().at(stage);
  out.insert(in.sections.begin(), in.sections.end());
  for (const auto& up : in.upstream) collect_sections(up, out);
}

// Hash over run.seed and the sections the stage depends on, so an edit to an
// unrelated section leaves the stage up to date.
std::uint64_t stage_config_hash(const Config& cfg, const std::string& stage) {
  std::set<std::string> sections;
  collect_sections(stage, sections);
  const ordered_json full = config_to_json(cfg);
  ordered_json sub;
  sub["seed"] = cfg.run.seed;
  for (const auto& s : sections) sub[s] = full.at(s);
  return fnv1a64(sub.dump());
}

}  // namespace

Runner::Runner(Config cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log) {}

fs::path Runner::run_dir() const { return fs::path(cfg_.run.root) / cfg_.run.name; }
fs::path Runner::stage_dir(const std::string& stage) const { return run_dir() / stage; }

fs::path Runner::require(const std::string& stage, const std::string& name) const {
  const fs::path p = stage_dir(stage) / name;
  if (!fs::exists(p)) {
    throw Error(ErrorKind::kMissingArtifact,
                "missing artifact " + p.string() + "; run the '" + stage + "' stage first");
  }
  return p;
}

bool Runner::run(const std::string& stage, const StageOptions& opts) {
  if (std::find(stage_names().begin(), stage_names().end(), stage) == stage_names().end()) {
    throw Error(ErrorKind::kInvalidArgument, "unknown stage '" + stage + "'");
  }
  if (stage != "e2e") return run_single(stage, opts);
  bool worked = false;
  for (const auto& s : stage_names()) {
    if (s == "e2e") continue;
    if (s == "synth" && cfg_.dataset.source != "synthetic") continue;
    if (s == "reduce" && cfg_.dataset.source != "synthetic" && cfg_.dataset.selfsup_path.empty()) continue;
    if (s == "ablate-channels" &&
        std::find(cfg_.fusion.blocks.begin(), cfg_.fusion.blocks.end(), "siamese") == cfg_.fusion.blocks.end()) {
      continue;
    }
    worked = run_single(s, opts) || worked;
  }
  return worked;
}

bool Runner::run_single(const std::string& stage, const StageOptions& opts) {
  const std::uint64_t chash = config_hash(cfg_);
  std::string key = stage + ":" + hex(stage_config_hash(cfg_, stage));
  if (opts.blocks) key += ":" + join(*opts.blocks, "+");
  const std::string stage_hash = hex(fnv1a64(key));
  const fs::path dir = stage_dir(stage);
  const fs::path meta = dir / "stage.json";

  log_ << "[" << stage << "] seed=" << cfg_.run.seed << " config_hash=" << hex(chash) << '\n';
  if (!opts.force && fs::exists(meta)) {
    const auto j = read_json(meta);
    bool complete = j.value("hash", std::string()) == stage_hash;
    for (const auto& o : stage_outputs().at(stage)) complete = complete && fs::exists(dir / o);
    if (complete) {
      log_ << "[" << stage << "] up to date (use --force to rerun)\n";
      return false;
    }
  }
  fs::create_directories(dir);
  fs::remove(meta);
  execute(stage, opts, dir);

  ordered_json sj;
  sj["stage"] = stage;
  sj["hash"] = stage_hash;
  sj["seed"] = cfg_.run.seed;
  sj["config_hash"] = hex(chash);
  sj["outputs"] = stage_outputs().at(stage);
  write_json(meta, sj);

  const fs::path manifest = run_dir() / "manifest.json";
  ordered_json m;
  if (fs::exists(manifest)) m = ordered_json::parse(std::ifstream(manifest));
  m["config_hash"] = hex(chash);
  m["stages"][stage] = stage_hash;
  write_json(manifest, m);
  write_json(run_dir() / "config.json", config_to_json(cfg_));
  log_ << "[" << stage << "] done\n";
  return true;
}

Runner::Ingested Runner::load_ingested() const {
  const auto info = read_json(require("ingest", "ingest.json"));
  Ingested in;
  in.data = filter_rare_labels(load_manifest(info.at("manifest").get<std::string>()),
                               info.at("min_label_count").get<std::size_t>());
  std::ifstream split_in(require("ingest", "split.csv"));
  std::string line;
  std::getline(split_in, line);
  in.folds.n_folds = cfg_.dataset.n_folds;
  std::size_t row = 0;
  while (std::getline(split_in, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos || row >= in.data.size() ||
        line.substr(0, a) != in.data.samples[row].id) {
      throw Error(ErrorKind::kParse, "split.csv row " + std::to_string(row + 1) + " does not match the manifest");
    }
    const std::string part = line.substr(a + 1, b - a - 1);
    (part == "train" ? in.split.train : in.split.validation).push_back(row);
    in.folds.assignment.push_back(std::stoi(line.substr(b + 1)));
    ++row;
  }
  if (row != in.data.size()) throw Error(ErrorKind::kParse, "split.csv does not cover every sample");
  return in;
}

std::vector<imageproc::ThreeChannelImage> Runner::load_images() const {
  return read_images(require("preprocess", "images.bin"));
}

fusion::Polyrepresentation Runner::load_fused() const {
  require("fuse", "fused.csv");
  return fusion::read_polyrep(stage_dir("fuse"));
}

std::vector<std::string> Runner::selected_blocks(const StageOptions& opts) const {
  std::vector<std::string> blocks = opts.blocks ? *opts.blocks : cfg_.fusion.blocks;
  if (blocks.size() == 1 && blocks[0] == "all") blocks = kBlockOrder;
  return blocks;
}

void Runner::execute(const std::string& stage, const StageOptions& opts, const fs::path& dir) {
  const std::uint64_t seed = cfg_.run.seed;

  if (stage == "synth") {
    if (cfg_.dataset.source != "synthetic") {
      throw Error(ErrorKind::kConfig, "the synth stage needs dataset.source = \"synthetic\"");
    }
    const SyntheticData syn = generate_synthetic(cfg_.synthetic, seed);
    fs::create_directories(dir / "images");
    std::ofstream m(dir / "manifest.csv");
    m << "id,image_path,mask_path,age,labels,channel3_path\n";
    for (const Sample& s : syn.dataset.samples) {
      const std::string img = "images/" + s.id + ".pgm";
      const std::string mask = "images/" + s.id + "_mask.pgm";
      io::write_pgm(dir / img, s.image * kPgmScale);
      io::write_mask_pgm(dir / mask, *s.mask);
      std::string c3;
      if (s.precomputed_channel) {
        c3 = "images/" + s.id + "_c3.pgm";
        io::write_pgm(dir / c3, *s.precomputed_channel * kPgmScale);
      }
      std::vector<std::string> names;
      for (int l : s.labels) names.push_back(syn.dataset.vocab.names[l]);
      char age[32];
      std::snprintf(age, sizeof age, "%.3f", *s.age);
      m << s.id << ',' << img << ',' << mask << ',' << age << ',' << join(names, ";") << ',' << c3 << '\n';
    }
    FeatureBlock ss;
    ss.name = "selfsup";
    ss.provenance = Provenance::kSelfsup;
    ss.row_ids = sample_ids(syn.dataset);
    ss.column_names = indexed_names("e", syn.selfsup.cols());
    ss.values = syn.selfsup;
    write_block_csv(dir / "selfsup.csv", ss);
    return;
  }

  if (stage == "ingest") {
    const fs::path manifest = cfg_.dataset.source == "synthetic" ? require("synth", "manifest.csv")
                                                                  : fs::path(cfg_.dataset.manifest);
    const Dataset data = filter_rare_labels(load_manifest(manifest), cfg_.dataset.min_label_count);
    if (data.size() < 2) throw Error(ErrorKind::kInvalidArgument, "need at least two samples");
    const TrainValidationSplit sp = split(data.size(), cfg_.dataset.split_ratio, seed);
    const FoldAssignment folds = make_folds(data.size(), cfg_.dataset.n_folds, seed);
    std::vector<std::string> role(data.size(), "train");
    for (std::size_t i : sp.validation) role[i] = "validation";
    std::ofstream out(dir / "split.csv");
    out << "id,partition,fold\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
      out << data.samples[i].id << ',' << role[i] << ',' << folds.assignment[i] << '\n';
    }
    std::ofstream voc(dir / "vocabulary.csv");
    voc << "label,count\n";
    for (std::size_t l = 0; l < data.vocab.names.size(); ++l) {
      voc << data.vocab.names[l] << ',' << data.vocab.counts[l] << '\n';
    }
    ordered_json info;
    info["manifest"] = fs::absolute(manifest).string();
    info["min_label_count"] = cfg_.dataset.min_label_count;
    info["n_samples"] = data.size();
    write_json(dir / "ingest.json", info);
    return;
  }

  if (stage == "triplets") {
    const Ingested in = load_ingested();
    const SplitTriplets t = split_triplets(in.data, in.split, cfg_.sampler);
    const auto ids = sample_ids(in.data);
    sampler::write_triplets_csv((dir / "triplets.csv").string(), t.train, ids, in.data.vocab);
    sampler::write_triplets_csv((dir / "val_triplets.csv").string(), t.validation, ids, in.data.vocab);
    log_ << "[triplets] " << t.train.size() << " train, " << t.validation.size() << " validation\n";
    return;
  }

  if (stage == "preprocess") {
    const Ingested in = load_ingested();
    const auto images = preprocess(in.data, cfg_.imageproc);
    write_images(dir / "images.bin", images);
    if (!images.empty()) {
      io::RgbImage preview{static_cast<int>(images[0].rows()), static_cast<int>(images[0].cols()), {}};
      for (Eigen::Index y = 0; y < images[0].rows(); ++y) {
        for (Eigen::Index x = 0; x < images[0].cols(); ++x) {
          std::array<std::uint8_t, 3> px{};
          for (int c = 0; c < 3; ++c) {
            px[c] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(images[0].channels[c](y, x), 0.0, 1.0)));
          }
          preview.pixels.push_back(px);
        }
      }
      io::write_png_rgb(dir / "preview.png", preview);
    }
    return;
  }

  if (stage == "train-siamese") {
    const Ingested in = load_ingested();
    const auto ids = sample_ids(in.data);
    SplitTriplets t;
    t.train = sampler::read_triplets_csv(require("triplets", "triplets.csv").string(), ids, in.data.vocab);
    t.validation = sampler::read_triplets_csv(require("triplets", "val_triplets.csv").string(), ids, in.data.vocab);
    const auto images = load_images();
    const siamese::TrainResult r = train_siamese(in.data, images, t, cfg_);
    siamese::save_parameters(dir / "encoder.bin", r.encoder, config_hash(cfg_));
    siamese::write_history_csv(dir / "history.csv", r.history);
    log_ << "[train-siamese] " << r.history.size() << " epochs, best epoch " << r.best_epoch << '\n';
    return;
  }

  if (stage == "embed") {
    const Ingested in = load_ingested();
    const siamese::Encoder enc = siamese::load_parameters(require("train-siamese", "encoder.bin"));
    write_block_csv(dir / "embeddings.csv", siamese::export_embeddings(enc, load_images(), sample_ids(in.data)));
    return;
  }

  if (stage == "radiomics") {
    const Ingested in = load_ingested();
    write_block_csv(dir / "radiomics.csv", radiomics::extract_block(in.data.samples, cfg_.radiomics));
    return;
  }

  if (stage == "reduce") {
    const Ingested in = load_ingested();
    fs::path source = cfg_.dataset.selfsup_path;
    if (source.empty()) {
      if (cfg_.dataset.source != "synthetic") {
        throw Error(ErrorKind::kConfig, "dataset.selfsup_path is required for the reduce stage");
      }
      source = require("synth", "selfsup.csv");
    }
    const FeatureBlock raw = fusion::load_external_embeddings(source, sample_ids(in.data));
    const FeatureBlock reduced = reduce_selfsup(raw, cfg_.fusion.selfsup_dim, cfg_.fusion.knn_k);
    write_block_csv(dir / "selfsup.csv", reduced);
    const int side = cfg_.explain.visualize_side;
    if (side > 0) {
      if (reduced.rows() >= static_cast<Eigen::Index>(side) * side && reduced.cols() >= 3) {
        io::write_png_rgb(dir / "features_pca.png", explain::visualize_features(reduced, side));
      } else {
        warn("explain.visualize_side " + std::to_string(side) + " needs " + std::to_string(side * side) +
             " samples; skipping the PCA image");
      }
    }
    return;
  }

  if (stage == "fuse") {
    const Ingested in = load_ingested();
    const auto ids = sample_ids(in.data);
    std::vector<FeatureBlock> blocks;
    for (const auto& name : used_blocks(cfg_)) {
      FeatureBlock b;
      if (name == "siamese") {
        b = read_block_csv(require("embed", "embeddings.csv"), "siamese", Provenance::kSiamese);
      } else if (name == "selfsup") {
        b = read_block_csv(require("reduce", "selfsup.csv"), "selfsup", Provenance::kSelfsup);
      } else if (name == "radiomics") {
        b = read_block_csv(require("radiomics", "radiomics.csv"), "radiomics", Provenance::kRadiomics);
      } else {
        b = fusion::tabular_block(in.data.samples);
      }
      check_rows(b, ids);
      blocks.push_back(std::move(b));
    }
    const auto poly = fusion::assemble(blocks, std::vector<bool>(blocks.size(), true), in.data.label_matrix(),
                                       in.data.vocab.names, cfg_.fusion.knn_k);
    fusion::write_polyrep(dir, poly);
    return;
  }

  if (stage == "train-eval") {
    const Ingested in = load_ingested();
    const auto blocks = selected_blocks(opts);
    const auto report = mlab::cross_validate(select_blocks(load_fused(), blocks), in.folds, cfg_.classifier);
    mlab::write_report_json(dir / "metrics.json", report);
    std::ofstream out(dir / "metrics.csv");
    out.precision(17);
    out << "metric";
    for (std::size_t f = 0; f < report.folds.size(); ++f) out << ",fold_" << f;
    out << ",mean\n";
    for (const auto& [name, field] : mlab::metric_fields()) {
      out << name;
      for (const auto& m : report.folds) out << ',' << m.*field;
      out << ',' << report.mean.*field << '\n';
    }
    log_ << "[train-eval] blocks=" << join(blocks, "+") << " f1_macro=" << report.mean.f1_macro
         << " subset_accuracy=" << report.mean.subset_accuracy << '\n';
    return;
  }

  if (stage == "ablate-channels") {
    const Ingested in = load_ingested();
    const auto blocks = selected_blocks(opts);
    if (std::find(blocks.begin(), blocks.end(), "siamese") == blocks.end()) {
      throw Error(ErrorKind::kConfig, "channel ablation needs the siamese block enabled");
    }
    const auto poly = load_fused();
    std::vector<FeatureBlock> fixed;
    for (const auto& name : blocks) {
      if (name == "siamese") continue;
      if (name == "tabular") {
        fixed.push_back(fusion::tabular_block(in.data.samples));
      } else {
        fixed.push_back(read_block_csv(require(name == "selfsup" ? "reduce" : "radiomics",
                                               name == "selfsup" ? "selfsup.csv" : "radiomics.csv"),
                                       name, parse_provenance(name)));
      }
    }
    const auto rows = explain::channel_ablation(
        load_images(),
        [&](const std::vector<imageproc::ThreeChannelImage>& imgs) {
          return cv_accuracy_with_images(in.data, imgs, in.split, in.folds, fixed, blocks, cfg_);
        },
        seed);
    explain::write_ablation_csv(dir / "ablation.csv", rows);
    return;
  }

  if (stage == "importance") {
    const Ingested in = load_ingested();
    const auto poly = select_blocks(load_fused(), selected_blocks(opts));
    const auto result = explain::block_importance(poly, in.folds, cfg_.classifier, cfg_.explain.n_repeats, seed);
    explain::write_importance_csv(dir / "importance.csv", result);
    return;
  }

  if (stage == "gradcheck") {
    siamese::EncoderConfig e;
    e.input_hw = 8;
    e.patch = 4;
    e.hidden = {4};
    e.embedding_dim = 4;
    e.n_labels = 3;
    e.l2_normalize = cfg_.encoder.l2_normalize;
    ordered_json j;
    double worst = 0.0;
    j["runs"] = ordered_json::array();
    for (std::uint64_t k = 0; k < 10; ++k) {
      e.seed = seed + k;
      const auto rep = siamese::gradcheck(e, cfg_.train, seed + k);
      worst = std::max(worst, rep.max_rel_error);
      j["runs"].push_back({{"seed", seed + k},
                           {"max_rel_error", rep.max_rel_error},
                           {"n_params", rep.n_params},
                           {"active_hinges", rep.active_hinges}});
    }
    j["max_rel_error"] = worst;
    write_json(dir / "gradcheck.json", j);
    log_ << "[gradcheck] max relative error " << worst << '\n';
    return;
  }

  if (stage == "report") {
    const Ingested in = load_ingested();
    const ReportTable table = compare_configurations(load_fused(), in.folds, cfg_.report, cfg_.classifier);
    write_report_csv(dir / "report.csv", table);
    ordered_json j;
    for (std::size_t c = 0; c < table.configurations.size(); ++c) {
      j[table.configurations[c]] = ordered_json::parse(mlab::report_json(table.reports[c]))["mean"];
    }
    write_json(dir / "report.json", j);
    return;
  }

  throw Error(ErrorKind::kInvalidArgument, "unknown stage '" + stage + "'");
}

}  // namespace polyrep::pipeline
