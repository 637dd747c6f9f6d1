#include "volnorm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "volnorm/errors.hpp"
#include "volnorm/impute.hpp"
#include "volnorm/nifti.hpp"
#include "volnorm/phantom.hpp"
#include "volnorm/radiomics.hpp"
#include "volnorm/selection.hpp"
#include "volnorm/volcache.hpp"

namespace volnorm::cli {

namespace {

constexpr const char* kModalities[3] = {"FLAIR", "T1wCE", "T2w"};
constexpr const char* kCorpusManifest = "corpus_manifest.tsv";
constexpr const char* kNormalizeManifest = "normalize_manifest.tsv";

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string field;
  while (std::getline(in, field, sep)) out.push_back(field);
  return out;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

Config Config::load(const fs::path& path) {
  return from_string(read_text_file(path));
}

Config Config::from_string(const std::string& text) {
  Config config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfig("config line " + std::to_string(line_no) +
                          " is not key = value");
    }
    config.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return config;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : std::stod(it->second);
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : std::stoi(it->second);
}

std::uint64_t Config::get_u64(const std::string& key,
                              std::uint64_t fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : std::stoull(it->second);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw InvalidConfig("boolean config key '" + key + "' must be true/false");
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

void Config::apply(isgen::TrainConfig& train) const {
  train.lambda = static_cast<float>(get_double("lambda", train.lambda));
  train.off_epochs = get_int("off_epochs", train.off_epochs);
  train.on_epochs = get_int("on_epochs", train.on_epochs);
  train.cycles = get_int("cycles", train.cycles);
  train.warmup_epochs = get_int("warmup_epochs", train.warmup_epochs);
  train.d_max = get_int("d_max", train.d_max);
  train.lr = static_cast<float>(get_double("lr", train.lr));
  train.seed = get_u64("seed", train.seed);
}

std::uint64_t fnv1a_hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash " + path.string());
  std::uint64_t hash = 1469598103934665603ULL;
  char buffer[4096];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buffer[i]);
      hash *= 1099511628211ULL;
    }
    if (!in) break;
  }
  return hash;
}

void atomic_write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string subject_name(int index) {
  std::ostringstream out;
  out << "subject_";
  if (index < 100) out << (index < 10 ? "00" : "0");
  out << index;
  return out.str();
}

struct SubjectEntry {
  std::string id;
  int label = 0;
  Orientation orientation = Orientation::Coronal;
  int slices = 0, rows = 0, cols = 0;
};

std::vector<SubjectEntry> read_corpus_manifest(const fs::path& corpus_dir) {
  const fs::path path = corpus_dir / kCorpusManifest;
  if (!fs::exists(path)) {
    throw IoError("no corpus manifest at " + path.string());
  }
  std::vector<SubjectEntry> subjects;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("subject\t", 0) == 0) {
      continue;
    }
    const auto fields = split(line, '\t');
    if (fields.size() != 6) throw IoError("malformed corpus manifest row");
    SubjectEntry e;
    e.id = fields[0];
    e.label = std::stoi(fields[1]);
    e.orientation = orientation_from_string(fields[2]);
    e.slices = std::stoi(fields[3]);
    e.rows = std::stoi(fields[4]);
    e.cols = std::stoi(fields[5]);
    subjects.push_back(std::move(e));
  }
  if (subjects.empty()) throw IoError("corpus manifest lists no subjects");
  return subjects;
}

Volume3D mask_to_volume(const Mask3D& mask, Orientation orientation) {
  Volume3D vol(mask.slices(), mask.rows(), mask.cols(), orientation,
               mask.spacing(), "mask");
  for (long i = 0; i < vol.numel(); ++i) {
    vol.values()[i] = mask.values()[static_cast<std::size_t>(i)];
  }
  return vol;
}

Mask3D volume_to_mask(const Volume3D& vol) {
  Mask3D mask(vol.slices(), vol.rows(), vol.cols(), vol.spacing());
  for (long i = 0; i < vol.numel(); ++i) {
    mask.values()[static_cast<std::size_t>(i)] =
        vol.values()[i] != 0.0f ? 1 : 0;
  }
  return mask;
}

Volume3D render_model(const PhantomModel& model, int slices, int rows,
                      int cols, Orientation orientation,
                      const std::string& modality) {
  Volume3D vol(slices, rows, cols, orientation, {1.0f, 1.0f, 1.0f}, modality);
  for (int s = 0; s < slices; ++s)
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        vol.at(s, r, c) = static_cast<float>(model.field_at(s, r, c));
      }
  return vol;
}

}  // namespace

int run_phantom(const PhantomOptions& options) {
  if (options.count < 1) throw InvalidConfig("phantom count must be >= 1");
  if (options.min_slices < 8 || options.max_slices < options.min_slices) {
    throw InvalidConfig("invalid phantom slice range");
  }
  fs::create_directories(options.out_dir);
  const Orientation orientations[3] = {Orientation::Axial,
                                       Orientation::Sagittal,
                                       Orientation::Coronal};
  std::ostringstream manifest;
  manifest << "subject\tlabel\torientation\tslices\trows\tcols\n";
  for (int i = 0; i < options.count; ++i) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(i)));
    const int label = i % 2;  // alternating: balanced within one
    const int slices =
        rng.uniform_int(options.min_slices, options.max_slices);
    const Orientation orientation = orientations[i % 3];

    PhantomConfig cfg;
    cfg.shape = {slices, options.rows, options.cols};
    cfg.n_blobs = options.n_blobs;
    cfg.tumor = true;
    cfg.tumor_scale = label == 1 ? 1.6 : 1.0;
    Phantom phantom = make_phantom(rng.next_u64(), cfg);

    const std::string id = subject_name(i);
    const fs::path dir = options.out_dir / id;
    fs::create_directories(dir);
    for (const char* modality : kModalities) {
      // Same blob geometry, modality-specific contrast.
      PhantomModel contrast = phantom.model;
      for (auto& blob : contrast.blobs) {
        blob.amplitude *= static_cast<float>(rng.uniform(0.7, 1.3));
      }
      Volume3D vol = render_model(contrast, slices, options.rows, options.cols,
                                  orientation, modality);
      write_nifti(vol, dir / (std::string(modality) + ".nii"));
    }
    write_nifti(mask_to_volume(phantom.mask, orientation), dir / "mask.nii",
                NiftiDatatype::U8);
    atomic_write_text(dir / "label.txt", std::to_string(label) + "\n");
    manifest << id << '\t' << label << '\t' << to_string(orientation) << '\t'
             << slices << '\t' << options.rows << '\t' << options.cols << '\n';
  }
  atomic_write_text(options.out_dir / kCorpusManifest, manifest.str());
  return options.count;
}

int run_train_isgen(const TrainIsgenOptions& options) {
  const auto subjects = read_corpus_manifest(options.corpus_dir);
  std::vector<Volume3D> volumes;
  for (const auto& subject : subjects) {
    const fs::path path =
        options.corpus_dir / subject.id / (options.modality + ".nii");
    if (!fs::exists(path)) {
      throw ModelMissing("corpus lacks " + path.string());
    }
    volumes.push_back(read_nifti(path));
  }
  options.train.validate();
  Rng rng(derive_seed(options.train.seed, 0xA11CE));
  const auto draw = [&](int count) {
    std::vector<isgen::Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const auto& vol = volumes[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(volumes.size()) - 1))];
      triplets.push_back(isgen::sample_triplet(vol, rng, options.train.d_max,
                                               options.image_size));
    }
    return triplets;
  };
  const auto train_triplets = draw(options.train_triplets);
  const auto val_triplets = draw(options.val_triplets);

  isgen::IsGenModel model =
      isgen::make_model(options.image_size, options.train.seed);
  const isgen::TrainLog log =
      isgen::on_off_train(model, train_triplets, val_triplets, options.train);
  if (!options.out_model.parent_path().empty()) {
    fs::create_directories(options.out_model.parent_path());
  }
  isgen::save_model(options.out_model, model);
  if (!options.out_log.empty()) {
    atomic_write_text(options.out_log, log.to_table());
  }
  return static_cast<int>(log.epochs.size());
}

namespace {

struct CacheEntry {
  std::string subject, item;
  std::string input;
  std::int64_t input_mtime = 0;
  std::uint64_t input_hash = 0;
  std::string output;
  std::uint64_t output_hash = 0;
  int slices = 0, rows = 0, cols = 0;
  std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
};

std::map<std::string, CacheEntry> read_normalize_manifest(const fs::path& path) {
  std::map<std::string, CacheEntry> entries;
  if (!fs::exists(path)) return entries;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("subject\t", 0) == 0) {
      continue;
    }
    const auto f = split(line, '\t');
    if (f.size() != 13) continue;  // stale manifest: recompute
    CacheEntry e;
    e.subject = f[0];
    e.item = f[1];
    e.input = f[2];
    e.input_mtime = std::stoll(f[3]);
    e.input_hash = std::stoull(f[4]);
    e.output = f[5];
    e.output_hash = std::stoull(f[6]);
    e.slices = std::stoi(f[7]);
    e.rows = std::stoi(f[8]);
    e.cols = std::stoi(f[9]);
    e.spacing = {std::stof(f[10]), std::stof(f[11]), std::stof(f[12])};
    entries[e.subject + "/" + e.item] = std::move(e);
  }
  return entries;
}

std::string normalize_manifest_text(const std::map<std::string, CacheEntry>& entries) {
  std::ostringstream out;
  out << "subject\titem\tinput\tinput_mtime\tinput_hash\toutput\toutput_hash"
         "\tslices\trows\tcols\tspacing_s\tspacing_r\tspacing_c\n";
  for (const auto& [key, e] : entries) {
    out << e.subject << '\t' << e.item << '\t' << e.input << '\t'
        << e.input_mtime << '\t' << e.input_hash << '\t' << e.output << '\t'
        << e.output_hash << '\t' << e.slices << '\t' << e.rows << '\t'
        << e.cols << '\t' << format_double(e.spacing[0]) << '\t'
        << format_double(e.spacing[1]) << '\t' << format_double(e.spacing[2])
        << '\n';
  }
  return out.str();
}

std::int64_t file_mtime(const fs::path& path) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             fs::last_write_time(path).time_since_epoch())
      .count();
}

}  // namespace

NormalizeSummary run_normalize(const NormalizeOptions& options) {
  fs::path out_dir = options.out_dir;
  if (out_dir.empty()) {
    const char* env = std::getenv("VOLNORM_CACHE_DIR");
    if (env == nullptr || *env == '\0') {
      throw InvalidConfig(
          "no output directory: pass --out or set VOLNORM_CACHE_DIR");
    }
    out_dir = env;
  }
  if (options.imputer != "isgen" && options.imputer != "copy") {
    throw InvalidConfig("imputer must be 'isgen' or 'copy'");
  }
  const auto subjects = read_corpus_manifest(options.in_dir);
  fs::create_directories(out_dir);
  const fs::path manifest_path = out_dir / kNormalizeManifest;
  auto entries = read_normalize_manifest(manifest_path);

  std::map<std::string, isgen::IsGenModel> models;
  const auto generator_for = [&](const std::string& modality)
      -> const isgen::Generator& {
    auto it = models.find(modality);
    if (it == models.end()) {
      const fs::path path = options.models_dir / ("isgen_" + modality + ".ckpt");
      if (!fs::exists(path)) {
        throw ModelMissing("no trained model for modality " + modality +
                           " at " + path.string());
      }
      it = models.emplace(modality, isgen::load_model(path)).first;
    }
    return it->second.generator;
  };

  NormalizeSummary summary;
  for (const auto& subject : subjects) {
    const fs::path out_subject = out_dir / subject.id;
    fs::create_directories(out_subject);
    const fs::path label_in = options.in_dir / subject.id / "label.txt";
    if (fs::exists(label_in)) {
      atomic_write_text(out_subject / "label.txt", read_text_file(label_in));
    }
    const std::string items[4] = {kModalities[0], kModalities[1],
                                  kModalities[2], "mask"};
    for (const std::string& item : items) {
      const fs::path input = options.in_dir / subject.id / (item + ".nii");
      if (!fs::exists(input)) throw IoError("missing input " + input.string());
      const fs::path output = out_subject / (item + ".vc");
      const std::string key = subject.id + "/" + item;
      const std::int64_t mtime = file_mtime(input);

      auto it = entries.find(key);
      if (it != entries.end() && fs::exists(output)) {
        const bool input_unchanged =
            it->second.input_mtime == mtime ||
            it->second.input_hash == fnv1a_hash_file(input);
        if (input_unchanged &&
            fnv1a_hash_file(output) == it->second.output_hash) {
          ++summary.reused;
          continue;
        }
      }

      CacheEntry entry;
      entry.subject = subject.id;
      entry.item = item;
      entry.input = input.string();
      entry.input_mtime = mtime;
      entry.input_hash = fnv1a_hash_file(input);
      entry.output = output.string();

      if (item == "mask") {
        const Volume3D raw = read_nifti(input);
        const Mask3D normalized = impute::normalize_mask(
            volume_to_mask(raw), raw.orientation(), options.target);
        Volume3D as_volume =
            mask_to_volume(normalized, Orientation::Coronal);
        save_volcache(output, as_volume);
        entry.slices = normalized.slices();
        entry.rows = normalized.rows();
        entry.cols = normalized.cols();
        entry.spacing = normalized.spacing();
      } else {
        const Volume3D raw = read_nifti(input);
        impute::SliceSynth synth;
        if (options.imputer == "copy") {
          synth = impute::copy_synth();
        } else {
          synth = impute::make_generator_synth(generator_for(item),
                                               raw.values().maxCoeff());
        }
        const Volume3D normalized =
            impute::normalize_volume(raw, synth, options.target);
        save_volcache(output, normalized);
        entry.slices = normalized.slices();
        entry.rows = normalized.rows();
        entry.cols = normalized.cols();
        entry.spacing = normalized.spacing();
      }
      entry.output_hash = fnv1a_hash_file(output);
      entries[key] = std::move(entry);
      ++summary.computed;
    }
  }
  atomic_write_text(manifest_path, normalize_manifest_text(entries));
  return summary;
}

namespace {

int read_label_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing label file " + path.string());
  return std::stoi(trim(read_text_file(path)));
}

struct SubjectVolumes {
  radiomics::ModalityVolumes volumes;
  Mask3D mask;
  int label = 0;
};

SubjectVolumes load_raw_subject(const fs::path& corpus_dir,
                                const SubjectEntry& subject) {
  SubjectVolumes out;
  out.volumes.flair = read_nifti(corpus_dir / subject.id / "FLAIR.nii");
  out.volumes.t1wce = read_nifti(corpus_dir / subject.id / "T1wCE.nii");
  out.volumes.t2w = read_nifti(corpus_dir / subject.id / "T2w.nii");
  out.mask = volume_to_mask(read_nifti(corpus_dir / subject.id / "mask.nii"));
  out.label = read_label_file(corpus_dir / subject.id / "label.txt");
  return out;
}

SubjectVolumes load_normalized_subject(
    const fs::path& dir, const std::string& subject,
    const std::map<std::string, CacheEntry>& entries) {
  const auto load = [&](const std::string& item) {
    const auto it = entries.find(subject + "/" + item);
    if (it == entries.end()) {
      throw IoError("normalize manifest lacks " + subject + "/" + item);
    }
    Volume3D vol = load_volcache(dir / subject / (item + ".vc"));
    vol.set_spacing(it->second.spacing);
    vol.set_modality(item);
    return vol;
  };
  SubjectVolumes out;
  out.volumes.flair = load("FLAIR");
  out.volumes.t1wce = load("T1wCE");
  out.volumes.t2w = load("T2w");
  Volume3D mask_vol = load("mask");
  out.mask = volume_to_mask(mask_vol);
  out.mask.set_spacing(mask_vol.spacing());
  out.label = read_label_file(dir / subject / "label.txt");
  return out;
}

}  // namespace

int run_radiomics(const RadiomicsOptions& options) {
  std::ostringstream table;
  table << "subject\tlabel";
  for (const auto& name : radiomics::feature_names()) table << '\t' << name;
  table << '\n';

  int rows = 0;
  const bool normalized = fs::exists(options.in_dir / kNormalizeManifest);
  if (normalized) {
    const auto entries =
        read_normalize_manifest(options.in_dir / kNormalizeManifest);
    std::vector<std::string> subjects;
    for (const auto& [key, entry] : entries) {
      if (entry.item == "mask") subjects.push_back(entry.subject);
    }
    std::sort(subjects.begin(), subjects.end());
    for (const auto& subject : subjects) {
      const SubjectVolumes sv =
          load_normalized_subject(options.in_dir, subject, entries);
      const radiomics::FeatureVector fv =
          radiomics::extract_all(sv.volumes, sv.mask);
      table << subject << '\t' << sv.label;
      for (double v : fv.values) table << '\t' << format_double(v);
      table << '\n';
      ++rows;
    }
  } else {
    for (const auto& subject : read_corpus_manifest(options.in_dir)) {
      const SubjectVolumes sv = load_raw_subject(options.in_dir, subject);
      const radiomics::FeatureVector fv =
          radiomics::extract_all(sv.volumes, sv.mask);
      table << subject.id << '\t' << sv.label;
      for (double v : fv.values) table << '\t' << format_double(v);
      table << '\n';
      ++rows;
    }
  }
  if (!options.out_file.parent_path().empty()) {
    fs::create_directories(options.out_file.parent_path());
  }
  atomic_write_text(options.out_file, table.str());
  return rows;
}

int run_select(const SelectOptions& options) {
  const auto entries =
      read_normalize_manifest(options.in_dir / kNormalizeManifest);
  if (entries.empty()) {
    throw IoError("no normalize manifest in " + options.in_dir.string());
  }
  std::ostringstream table;
  table << "subject\tcenter\tstart\tend\n";
  int rows = 0;
  std::vector<std::string> subjects;
  for (const auto& [key, entry] : entries) {
    if (entry.item == "mask") subjects.push_back(entry.subject);
  }
  std::sort(subjects.begin(), subjects.end());
  for (const auto& subject : subjects) {
    const Volume3D mask_vol =
        load_volcache(options.in_dir / subject / "mask.vc");
    const Mask3D mask = volume_to_mask(mask_vol);
    const int center = selection::tumor_center_index(mask);
    const selection::WindowRange range =
        selection::select_window(center, options.window, mask.slices());
    table << subject << '\t' << center << '\t' << range.start << '\t'
          << range.end() << '\n';
    ++rows;
  }
  atomic_write_text(options.out_file, table.str());
  return rows;
}

FeatureTable load_feature_table(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty feature table");
  const auto header = split(line, '\t');
  const auto& names = radiomics::feature_names();
  if (header.size() != names.size() + 2 || header[0] != "subject" ||
      header[1] != "label") {
    throw IoError("feature table header does not match the registry");
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (header[i + 2] != names[i]) {
      throw IoError("feature column " + std::to_string(i) +
                    " is not " + names[i]);
    }
  }
  FeatureTable table;
  std::vector<std::array<double, radiomics::kFeatureCount>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != names.size() + 2) {
      throw IoError("malformed feature row: " + line);
    }
    table.subjects.push_back(fields[0]);
    table.data.y.push_back(std::stoi(fields[1]));
    std::array<double, radiomics::kFeatureCount> row{};
    for (std::size_t i = 0; i < names.size(); ++i) {
      row[i] = std::stod(fields[i + 2]);
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw IoError("feature table has no rows");
  table.data.x.resize(static_cast<int>(rows.size()), radiomics::kFeatureCount);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < radiomics::kFeatureCount; ++j) {
      table.data.x(static_cast<int>(i), j) = static_cast<float>(rows[i][static_cast<std::size_t>(j)]);
    }
  }
  table.data.validate();
  return table;
}

ml::ForestConfig forest_config_from(const Config& config) {
  ml::ForestConfig out;
  out.n_estimators = config.get_int("n_estimators", out.n_estimators);
  const std::string criterion = config.get_string("criterion", "gini");
  if (criterion == "gini") {
    out.criterion = ml::Criterion::Gini;
  } else if (criterion == "entropy") {
    out.criterion = ml::Criterion::Entropy;
  } else {
    throw InvalidConfig("criterion must be gini or entropy");
  }
  const std::string depth = config.get_string("max_depth", "none");
  out.max_depth = depth == "none" ? 0 : std::stoi(depth);
  const std::string leaves = config.get_string("max_leaf_nodes", "none");
  out.max_leaf_nodes = leaves == "none" ? 0 : std::stoi(leaves);
  const std::string weight = config.get_string("class_weight", "none");
  if (weight != "none" && weight != "balanced") {
    throw InvalidConfig("class_weight must be balanced or none");
  }
  out.balanced_class_weight = weight == "balanced";
  out.min_samples_split =
      config.get_int("min_samples_split", out.min_samples_split);
  out.bootstrap = config.get_bool("bootstrap", out.bootstrap);
  out.features_per_split =
      config.get_int("features_per_split", out.features_per_split);
  out.seed = config.get_u64("forest_seed", out.seed);
  out.validate();
  return out;
}

std::string forest_config_to_text(const ml::ForestConfig& config, int k,
                                  std::uint64_t seed) {
  std::ostringstream out;
  out << "n_estimators = " << config.n_estimators << '\n'
      << "criterion = "
      << (config.criterion == ml::Criterion::Gini ? "gini" : "entropy") << '\n'
      << "max_depth = "
      << (config.max_depth > 0 ? std::to_string(config.max_depth) : "none")
      << '\n'
      << "max_leaf_nodes = "
      << (config.max_leaf_nodes > 0 ? std::to_string(config.max_leaf_nodes)
                                    : "none")
      << '\n'
      << "class_weight = "
      << (config.balanced_class_weight ? "balanced" : "none") << '\n'
      << "min_samples_split = " << config.min_samples_split << '\n'
      << "bootstrap = " << (config.bootstrap ? "true" : "false") << '\n'
      << "features_per_split = " << config.features_per_split << '\n'
      << "forest_seed = " << config.seed << '\n'
      << "k = " << k << '\n'
      << "cv_seed = " << seed << '\n';
  return out.str();
}

std::vector<ml::ForestConfig> grid_from_config(const Config& config,
                                               std::uint64_t seed) {
  const auto ints = [&](const std::string& key, const std::string& fallback) {
    std::vector<int> out;
    for (const auto& item : split(config.get_string(key, fallback), ',')) {
      const std::string value = trim(item);
      out.push_back(value == "none" ? 0 : std::stoi(value));
    }
    return out;
  };
  const auto strings = [&](const std::string& key, const std::string& fallback) {
    std::vector<std::string> out;
    for (const auto& item : split(config.get_string(key, fallback), ',')) {
      out.push_back(trim(item));
    }
    return out;
  };
  std::vector<ml::ForestConfig> grid;
  for (int ne : ints("n_estimators", "50,150,200,250,300"))
    for (const auto& criterion : strings("criterion", "gini,entropy"))
      for (int depth : ints("max_depth", "10,15,20,25,30,35,40,45,50"))
        for (int leaves : ints("max_leaf_nodes", "5,10,15,20,30,none"))
          for (const auto& weight : strings("class_weight", "balanced,none"))
            for (int ms : ints("min_samples_split", "2,4,6,8")) {
              ml::ForestConfig cfg;
              cfg.n_estimators = ne;
              cfg.criterion = criterion == "entropy" ? ml::Criterion::Entropy
                                                     : ml::Criterion::Gini;
              cfg.max_depth = depth;
              cfg.max_leaf_nodes = leaves;
              cfg.balanced_class_weight = weight == "balanced";
              cfg.min_samples_split = ms;
              cfg.seed = seed;
              grid.push_back(cfg);
            }
  return grid;
}

int run_train_rf(const TrainRfOptions& options) {
  const FeatureTable table = load_feature_table(options.features_file);
  std::vector<ml::ForestConfig> grid;
  if (options.grid_config.empty()) {
    grid = ml::default_grid(options.seed);
  } else {
    grid = grid_from_config(Config::load(options.grid_config), options.seed);
  }
  const ml::GridSearchResult result =
      ml::grid_search(table.data, grid, options.k, options.seed,
                      options.workers);

  fs::create_directories(options.out_dir);
  std::ostringstream grid_table;
  grid_table << "config\tcv_accuracy\n";
  for (const auto& row : result.table) {
    grid_table << row.config.describe() << '\t'
               << format_double(row.cv_accuracy) << '\n';
  }
  atomic_write_text(options.out_dir / "grid_table.tsv", grid_table.str());
  atomic_write_text(options.out_dir / "rf_config.txt",
                    forest_config_to_text(result.best, options.k,
                                          options.seed));
  return static_cast<int>(grid.size());
}

int run_evaluate(const EvaluateOptions& options) {
  const FeatureTable table = load_feature_table(options.features_file);
  const Config config = Config::load(options.rf_config);
  const ml::ForestConfig forest = forest_config_from(config);
  const int k = config.get_int("k", options.k);
  const std::uint64_t seed = config.get_u64("cv_seed", options.seed);
  const ml::EvalReport report = ml::kfold_cv(table.data, forest, k, seed);
  if (!options.out_report.parent_path().empty()) {
    fs::create_directories(options.out_report.parent_path());
  }
  atomic_write_text(options.out_report, report.to_table(options.model_name));
  return static_cast<int>(report.folds.size());
}

int run_anova(const AnovaOptions& options) {
  const ml::EvalReport a =
      ml::EvalReport::from_table(read_text_file(options.report_a));
  const ml::EvalReport b =
      ml::EvalReport::from_table(read_text_file(options.report_b));
  if (a.folds.size() != b.folds.size()) {
    throw UnbalancedDesign("reports have different fold counts");
  }
  const auto metric_values = [](const ml::FoldResult& fold) {
    const ml::MetricValue metrics[6] = {fold.metrics.accuracy,
                                        fold.metrics.sensitivity,
                                        fold.metrics.specificity,
                                        fold.metrics.ppv,
                                        fold.metrics.npv,
                                        fold.auroc};
    std::array<double, 6> values{};
    for (int m = 0; m < 6; ++m) {
      if (!metrics[m].defined) {
        throw UnbalancedDesign(
            "a fold metric is undefined; the ANOVA design would be "
            "unbalanced");
      }
      values[static_cast<std::size_t>(m)] = metrics[m].value;
    }
    return values;
  };
  std::vector<std::vector<std::vector<double>>> cells(
      2, std::vector<std::vector<double>>(6));
  for (const auto* report : {&a, &b}) {
    const std::size_t model = report == &a ? 0 : 1;
    for (const auto& fold : report->folds) {
      const auto values = metric_values(fold);
      for (int m = 0; m < 6; ++m) {
        cells[model][static_cast<std::size_t>(m)].push_back(
            values[static_cast<std::size_t>(m)]);
      }
    }
  }
  const ml::AnovaResult result = ml::anova_two_way(cells, options.alpha);

  std::ostringstream out;
  out << "source\tss\tdf\tms\tF\tp\tF_crit\tsignificant\n";
  for (const auto* factor :
       {&result.factor_a, &result.factor_b, &result.interaction}) {
    out << factor->source << '\t' << format_double(factor->ss) << '\t'
        << factor->df << '\t' << format_double(factor->ms) << '\t';
    if (factor->defined) {
      out << format_double(factor->f) << '\t' << format_double(factor->p)
          << '\t' << format_double(factor->f_crit) << '\t'
          << (factor->p < options.alpha ? "yes" : "no") << '\n';
    } else {
      out << "na\tna\tna\tna\n";
    }
  }
  out << "error\t" << format_double(result.ss_error) << '\t'
      << result.df_error << '\t' << format_double(result.ms_error)
      << "\t-\t-\t-\t-\n";
  atomic_write_text(options.out_file, out.str());
  return 3;
}

int run_impute_single(const ImputeOptions& options) {
  const Volume3D left = read_nifti(options.left);
  const Volume3D right = read_nifti(options.right);
  if (left.slices() != 1 || right.slices() != 1) {
    throw InvalidConfig("impute --single expects single-slice volumes");
  }
  if (left.rows() != right.rows() || left.cols() != right.cols()) {
    throw ShapeMismatch("the two slices have different shapes");
  }
  const isgen::IsGenModel model = isgen::load_model(options.model);
  const float peak =
      std::max(left.values().maxCoeff(), right.values().maxCoeff());
  const impute::SliceSynth synth =
      impute::make_generator_synth(model.generator, peak);
  const Image2D middle = synth(left.slice(0), right.slice(0));
  Volume3D out(1, left.rows(), left.cols(), left.orientation(), left.spacing(),
               left.modality());
  out.set_slice(0, middle);
  write_nifti(out, options.out);
  return 1;
}

}  // namespace volnorm::cli
