#include "omad/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "omad/error.hpp"
#include "omad/rng.hpp"

namespace omad {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestHeader = "sample_id\tsplit\tlabel\tpath\tsource_ids";

std::string padded(int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, value);
  return buf;
}

std::uint64_t sample_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(seed ^ mix64(a)) ^ mix64(b + 0x9e37));
}

std::vector<int> parse_ids(const std::string& text, const std::string& sample_id) {
  std::vector<int> ids;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      ids.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw FormatError("manifest: bad source id '" + item + "' for " + sample_id);
    }
  }
  return ids;
}

}  // namespace

IdentityPrototype make_prototype(std::uint64_t seed, int identity_id, int size) {
  if (size < 16) throw ConfigError("prototype size must be >= 16, got " + std::to_string(size));
  RngStream rng(CounterRng(seed, RngPurpose::kPrototype, static_cast<std::uint64_t>(identity_id)));
  struct Bump {
    double cx, cy, inv_two_r2, amp;
  };
  // Narrow bumps of similar height: a blend of two identities shows twelve
  // half-height peaks instead of six full ones.
  std::vector<Bump> bumps;
  const double s = size;
  for (int k = 0; k < kPrototypeBumps; ++k) {
    Bump b{};
    b.cx = rng.uniform(0.15, 0.85) * s;
    b.cy = rng.uniform(0.15, 0.85) * s;
    const double r = rng.uniform(0.04, 0.08) * s;
    b.inv_two_r2 = 1.0 / (2.0 * r * r);
    b.amp = rng.uniform(0.8, 1.0);
    bumps.push_back(b);
  }
  IdentityPrototype p;
  p.identity_id = identity_id;
  p.size = size;
  p.pixels.resize(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = 0;
      for (const Bump& b : bumps) {
        const double dx = x + 0.5 - b.cx;
        const double dy = y + 0.5 - b.cy;
        v += b.amp * std::exp(-(dx * dx + dy * dy) * b.inv_two_r2);
      }
      p.pixels[static_cast<std::size_t>(y) * size + x] = v;
    }
  }
  const auto [lo, hi] = std::minmax_element(p.pixels.begin(), p.pixels.end());
  const double min = *lo;
  const double range = *hi - *lo;
  for (double& v : p.pixels) v = range > 0 ? (v - min) / range : 0.0;
  return p;
}

std::vector<double> blend_pixels(std::span<const double> a, std::span<const double> b, double blend,
                                 std::uint64_t noise_seed, double noise_std) {
  if (a.size() != b.size()) throw DimensionError("blend_pixels: images differ in size");
  if (!(blend >= 0.0 && blend <= 1.0)) throw ContractError("blend must lie in [0,1]");
  if (!(noise_std >= 0.0)) throw ContractError("noise_std must be >= 0");
  CounterRng noise(noise_seed, RngPurpose::kMorphNoise);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double v = blend * a[i] + (1.0 - blend) * b[i];
    if (noise_std > 0) v += noise_std * noise.normal(i);
    out[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

Sample make_bona_fide(const IdentityPrototype& proto, std::uint64_t noise_seed, double noise_std) {
  if (!(noise_std >= 0.0)) throw ContractError("noise_std must be >= 0");
  Sample s;
  s.sample_id = "bona_" + padded(proto.identity_id, 3);
  s.size = proto.size;
  s.label = kBonaFideLabel;
  s.source_ids = {proto.identity_id};
  s.pixels = proto.pixels;
  if (noise_std > 0) {
    CounterRng noise(noise_seed, RngPurpose::kBonaFideNoise);
    for (std::size_t i = 0; i < s.pixels.size(); ++i) {
      s.pixels[i] = std::clamp(s.pixels[i] + noise_std * noise.normal(i), 0.0, 1.0);
    }
  }
  return s;
}

Sample make_morph(const IdentityPrototype& a, const IdentityPrototype& b, double blend,
                  std::uint64_t noise_seed, double noise_std) {
  if (a.identity_id == b.identity_id) {
    throw ContractError("make_morph: both sides are identity " + std::to_string(a.identity_id));
  }
  if (a.size != b.size) throw DimensionError("make_morph: prototypes differ in size");
  Sample s;
  s.sample_id = "attack_" + padded(a.identity_id, 3) + "_" + padded(b.identity_id, 3);
  s.size = a.size;
  s.label = kAttackLabel;
  s.source_ids = {a.identity_id, b.identity_id};
  s.pixels = blend_pixels(a.pixels, b.pixels, blend, noise_seed, noise_std);
  return s;
}

std::vector<std::uint8_t> quantize(std::span<const double> pixels) {
  std::vector<std::uint8_t> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(pixels[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  throw ConfigError("unknown split '" + text + "' (expected train or test)");
}

void GeneratorParams::validate() const {
  if (n_identities < 4) {
    throw ConfigError("too few identities: need at least 4 to form identity-disjoint morph pools, got " +
                      std::to_string(n_identities));
  }
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("split fraction must lie in (0,1)");
  if (size < 16) throw ConfigError("image size must be >= 16");
  if (bona_fide_per_identity < 1) throw ConfigError("bona fide samples per identity must be >= 1");
  if (n_morphs < 0) throw ConfigError("morph count must be >= 0");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise must be a finite value >= 0");
  if (!(blend >= 0.0 && blend <= 1.0)) throw ConfigError("blend must lie in [0,1]");
}

std::vector<ManifestRecord> DatasetManifest::split_records(Split split) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  std::sort(out.begin(), out.end(),
            [](const ManifestRecord& a, const ManifestRecord& b) { return a.sample_id < b.sample_id; });
  return out;
}

std::vector<int> DatasetManifest::identities(Split split) const {
  std::set<int> ids;
  for (const auto& r : records) {
    if (r.split == split) ids.insert(r.source_ids.begin(), r.source_ids.end());
  }
  return {ids.begin(), ids.end()};
}

DatasetManifest generate_dataset(const GeneratorParams& params, const fs::path& out_dir) {
  params.validate();
  const int n = params.n_identities;

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  CounterRng split_rng(params.seed, RngPurpose::kSplit);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<std::size_t>(split_rng.below(i, i + 1))]);
  }
  const int n_train = std::clamp(static_cast<int>(std::lround(params.split_fraction * n)), 2, n - 2);
  std::vector<int> pools[2] = {{order.begin(), order.begin() + n_train}, {order.begin() + n_train, order.end()}};
  for (auto& pool : pools) std::sort(pool.begin(), pool.end());

  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create dataset directory " + out_dir.string() + ": " + ec.message());

  std::vector<IdentityPrototype> protos;
  protos.reserve(static_cast<std::size_t>(n));
  for (int id = 0; id < n; ++id) protos.push_back(make_prototype(params.seed, id, params.size));

  DatasetManifest manifest;
  manifest.params = params;
  manifest.root = out_dir;
  auto emit = [&](Sample s, Split split) {
    ManifestRecord rec;
    rec.sample_id = s.sample_id;
    rec.split = split;
    rec.label = s.label;
    rec.path = "images/" + s.sample_id + ".pgm";
    rec.source_ids = s.source_ids;
    write_pgm(out_dir / rec.path, s.size, s.size, quantize(s.pixels));
    manifest.records.push_back(std::move(rec));
  };

  const int train_morphs = static_cast<int>(std::lround(static_cast<double>(params.n_morphs) * n_train / n));
  const int morph_counts[2] = {train_morphs, params.n_morphs - train_morphs};
  int morph_index = 0;
  for (int p = 0; p < 2; ++p) {
    const Split split = p == 0 ? Split::kTrain : Split::kTest;
    const std::vector<int>& pool = pools[p];
    for (int id : pool) {
      for (int k = 0; k < params.bona_fide_per_identity; ++k) {
        Sample s = make_bona_fide(protos[static_cast<std::size_t>(id)],
                                  sample_key(params.seed, static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(k)),
                                  params.noise_std);
        s.sample_id = "bona_" + padded(id, 3) + "_" + padded(k, 2);
        emit(std::move(s), split);
      }
    }
    // Each identity in turn acts as the key image and is paired with a
    // random partner from the same pool.
    CounterRng pairing(params.seed, RngPurpose::kPairing, static_cast<std::uint64_t>(p));
    const std::size_t k = pool.size();
    for (int j = 0; j < morph_counts[p]; ++j, ++morph_index) {
      const std::size_t ai = static_cast<std::size_t>(j) % k;
      const std::size_t bi = (ai + 1 + pairing.below(static_cast<std::uint64_t>(j), k - 1)) % k;
      const int a = pool[ai];
      const int b = pool[bi];
      Sample s = make_morph(protos[static_cast<std::size_t>(a)], protos[static_cast<std::size_t>(b)], params.blend,
                            sample_key(params.seed ^ 0x6d6f727068ULL, static_cast<std::uint64_t>(morph_index), 0),
                            params.noise_std);
      s.sample_id = "attack_" + padded(morph_index, 4) + "_" + padded(a, 3) + "_" + padded(b, 3);
      emit(std::move(s), split);
    }
  }

  std::stable_sort(manifest.records.begin(), manifest.records.end(),
                   [](const ManifestRecord& x, const ManifestRecord& y) {
                     if (x.split != y.split) return x.split == Split::kTrain;
                     return x.sample_id < y.sample_id;
                   });

  std::ofstream tsv(out_dir / "manifest.tsv", std::ios::binary | std::ios::trunc);
  if (!tsv) throw IoError("cannot write " + (out_dir / "manifest.tsv").string());
  tsv << kManifestHeader << "\n";
  for (const auto& r : manifest.records) {
    tsv << r.sample_id << "\t" << to_string(r.split) << "\t" << r.label << "\t" << r.path << "\t";
    for (std::size_t i = 0; i < r.source_ids.size(); ++i) tsv << (i ? "," : "") << r.source_ids[i];
    tsv << "\n";
  }
  if (!tsv) throw IoError("failed writing manifest.tsv");

  nlohmann::json j;
  j["version"] = manifest.version;
  j["seed"] = params.seed;
  j["n_identities"] = params.n_identities;
  j["bona_fide_per_identity"] = params.bona_fide_per_identity;
  j["n_morphs"] = params.n_morphs;
  j["split_fraction"] = params.split_fraction;
  j["size"] = params.size;
  j["noise_std"] = params.noise_std;
  j["blend"] = params.blend;
  j["prototype_bumps"] = kPrototypeBumps;
  j["image_format"] = "pgm-p5";
  std::ofstream js(out_dir / "params.json", std::ios::binary | std::ios::trunc);
  js << j.dump(2) << "\n";
  if (!js) throw IoError("failed writing params.json");
  return manifest;
}

DatasetManifest load_manifest(const fs::path& dir) {
  DatasetManifest m;
  m.root = dir;
  std::ifstream js(dir / "params.json");
  if (!js) throw IoError("cannot open " + (dir / "params.json").string());
  try {
    const nlohmann::json j = nlohmann::json::parse(js);
    m.version = j.at("version").get<int>();
    m.params.seed = j.at("seed").get<std::uint64_t>();
    m.params.n_identities = j.at("n_identities").get<int>();
    m.params.bona_fide_per_identity = j.at("bona_fide_per_identity").get<int>();
    m.params.n_morphs = j.at("n_morphs").get<int>();
    m.params.split_fraction = j.at("split_fraction").get<double>();
    m.params.size = j.at("size").get<int>();
    m.params.noise_std = j.at("noise_std").get<double>();
    m.params.blend = j.value("blend", 0.5);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("params.json: ") + e.what());
  }
  if (m.version != kManifestVersion) throw FormatError("unsupported manifest version " + std::to_string(m.version));

  std::ifstream tsv(dir / "manifest.tsv");
  if (!tsv) throw IoError("cannot open " + (dir / "manifest.tsv").string());
  std::string line;
  if (!std::getline(tsv, line) || line != kManifestHeader) throw FormatError("manifest.tsv: bad header line");
  std::size_t line_no = 1;
  std::set<std::string> seen;
  while (std::getline(tsv, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream in(line);
    std::string col;
    while (std::getline(in, col, '\t')) cols.push_back(col);
    if (cols.size() != 5) throw FormatError("manifest.tsv line " + std::to_string(line_no) + ": expected 5 columns");
    ManifestRecord r;
    r.sample_id = cols[0];
    try {
      r.split = parse_split(cols[1]);
    } catch (const ConfigError&) {
      throw FormatError("manifest.tsv line " + std::to_string(line_no) + ": bad split '" + cols[1] + "'");
    }
    if (cols[2] != "0" && cols[2] != "1") {
      throw FormatError("manifest.tsv line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    r.label = cols[2] == "1" ? kBonaFideLabel : kAttackLabel;
    r.path = cols[3];
    r.source_ids = parse_ids(cols[4], r.sample_id);
    const bool two_distinct = r.source_ids.size() == 2 && r.source_ids[0] != r.source_ids[1];
    if ((r.label == kAttackLabel) != two_distinct || (r.label == kBonaFideLabel && r.source_ids.size() != 1)) {
      throw FormatError("manifest.tsv line " + std::to_string(line_no) + ": label does not match source ids for " +
                        r.sample_id);
    }
    if (!seen.insert(r.sample_id).second) throw FormatError("manifest.tsv: duplicate sample_id " + r.sample_id);
    m.records.push_back(std::move(r));
  }
  const auto train_ids = m.identities(Split::kTrain);
  const auto test_ids = m.identities(Split::kTest);
  std::vector<int> shared;
  std::set_intersection(train_ids.begin(), train_ids.end(), test_ids.begin(), test_ids.end(),
                        std::back_inserter(shared));
  if (!shared.empty()) {
    throw FormatError("manifest: identity " + std::to_string(shared.front()) + " appears in both splits");
  }
  return m;
}

template <typename Real>
Tensor<Real> flip_horizontal(const Tensor<Real>& image) {
  if (image.rank() != 3) throw DimensionError("flip_horizontal: expected [C,H,W], got " + shape_string(image.shape()));
  Tensor<Real> out(image.shape());
  const std::size_t rows = image.dim(0) * image.dim(1);
  const std::size_t w = image.dim(2);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t x = 0; x < w; ++x) out[r * w + x] = image[r * w + (w - 1 - x)];
  }
  return out;
}

template <typename Real>
Tensor<Real> resize_bilinear(const Tensor<Real>& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 3) throw DimensionError("resize_bilinear: expected [C,H,W], got " + shape_string(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == out_h && w == out_w) return image;
  if (out_h == 0 || out_w == 0) throw ContractError("resize_bilinear: empty target size");
  Tensor<Real> out({c, out_h, out_w});
  auto source = [](std::size_t dst, std::size_t in, std::size_t outn) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(s);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    return std::tuple{i0, i1, s - static_cast<double>(i0)};
  };
  for (std::size_t ch = 0; ch < c; ++ch) {
    const Real* src = image.data().data() + ch * h * w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto [y0, y1, fy] = source(y, h, out_h);
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto [x0, x1, fx] = source(x, w, out_w);
        const double top = (1 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1];
        const double bottom = (1 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1];
        out[(ch * out_h + y) * out_w + x] = static_cast<Real>((1 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

bool flip_decision(std::uint64_t flip_seed, std::size_t index) {
  return CounterRng(flip_seed, RngPurpose::kFlip).uniform(index) < 0.5;
}

DatasetReader::DatasetReader(DatasetManifest manifest)
    : manifest_(std::move(manifest)),
      train_(manifest_.split_records(Split::kTrain)),
      test_(manifest_.split_records(Split::kTest)),
      train_cache_(train_.size()),
      test_cache_(test_.size()) {}

const std::vector<ManifestRecord>& DatasetReader::records(Split split) const {
  return split == Split::kTrain ? train_ : test_;
}

const GrayImage& DatasetReader::image(Split split, std::size_t index) {
  const auto& recs = records(split);
  auto& cache = split == Split::kTrain ? train_cache_ : test_cache_;
  if (index >= recs.size()) {
    throw ContractError("sample index " + std::to_string(index) + " outside " + to_string(split) + " split of size " +
                        std::to_string(recs.size()));
  }
  GrayImage& slot = cache[index];
  if (slot.pixels.empty()) {
    const ManifestRecord& r = recs[index];
    try {
      slot = read_pgm(manifest_.root / r.path);
    } catch (const Error& e) {
      throw IoError("cannot load image for sample " + r.sample_id + ": " + e.what());
    }
  }
  return slot;
}

template <typename Real>
Batch<Real> DatasetReader::batch(Split split, std::span<const std::size_t> indices, bool augment,
                                 std::uint64_t flip_seed, int target_size) {
  if (target_size < 1) throw ContractError("target size must be positive");
  Batch<Real> out;
  const auto& recs = records(split);
  for (std::size_t index : indices) {
    const GrayImage& img = image(split, index);
    Tensor<Real> t({1, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)});
    const Real scale = static_cast<Real>(img.maxval);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = static_cast<Real>(img.pixels[i]) / scale;
    if (augment && flip_decision(flip_seed, index)) t = flip_horizontal(t);
    t = resize_bilinear(t, static_cast<std::size_t>(target_size), static_cast<std::size_t>(target_size));
    out.images.push_back(std::move(t));
    out.labels.push_back(recs[index].label);
    out.sample_ids.push_back(recs[index].sample_id);
  }
  return out;
}

template <typename Real>
Batch<Real> load_batch(const DatasetManifest& manifest, Split split, std::span<const std::size_t> indices,
                       bool augment, std::uint64_t flip_seed, int target_size) {
  DatasetReader reader(manifest);
  return reader.batch<Real>(split, indices, augment, flip_seed, target_size);
}

template Tensor<float> flip_horizontal(const Tensor<float>&);
template Tensor<double> flip_horizontal(const Tensor<double>&);
template Tensor<float> resize_bilinear(const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> resize_bilinear(const Tensor<double>&, std::size_t, std::size_t);
template Batch<float> DatasetReader::batch<float>(Split, std::span<const std::size_t>, bool, std::uint64_t, int);
template Batch<double> DatasetReader::batch<double>(Split, std::span<const std::size_t>, bool, std::uint64_t, int);
template Batch<float> load_batch<float>(const DatasetManifest&, Split, std::span<const std::size_t>, bool,
                                        std::uint64_t, int);
template Batch<double> load_batch<double>(const DatasetManifest&, Split, std::span<const std::size_t>, bool,
                                          std::uint64_t, int);

}  // namespace omad
