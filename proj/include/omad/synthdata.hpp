#pragma once

// Deterministic synthetic morphing-attack dataset.
//
// Each identity is a smooth greyscale prototype built from radial bumps. Bona
// fide samples are noisy copies of one prototype; attacks are convex pixel
// blends of two prototypes from the same split. Labels: 1 = bona fide,
// 0 = attack. Train and test splits never share an identity.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "omad/pgm.hpp"
#include "omad/tensor.hpp"

namespace omad {

inline constexpr int kBonaFideLabel = 1;
inline constexpr int kAttackLabel = 0;
inline constexpr int kPrototypeBumps = 6;
inline constexpr int kManifestVersion = 1;

struct IdentityPrototype {
  int identity_id = 0;
  int size = 0;
  std::vector<double> pixels;  // size*size, row-major, in [0,1]
};

struct Sample {
  std::string sample_id;
  int size = 0;
  std::vector<double> pixels;  // in [0,1]
  int label = kBonaFideLabel;
  std::vector<int> source_ids;
};

// Throws ConfigError for size < 16.
IdentityPrototype make_prototype(std::uint64_t seed, int identity_id, int size);

// clamp(prototype + N(0, noise_std^2), 0, 1).
Sample make_bona_fide(const IdentityPrototype& proto, std::uint64_t noise_seed, double noise_std);

// clamp(blend*a + (1-blend)*b + noise, 0, 1). Throws ContractError if a and b
// share an identity or blend is outside [0,1].
Sample make_morph(const IdentityPrototype& a, const IdentityPrototype& b, double blend,
                  std::uint64_t noise_seed, double noise_std);

// The pixel arithmetic behind make_morph, without the identity contract.
std::vector<double> blend_pixels(std::span<const double> a, std::span<const double> b, double blend,
                                 std::uint64_t noise_seed, double noise_std);

// Rounds [0,1] values to 8-bit samples.
std::vector<std::uint8_t> quantize(std::span<const double> pixels);

enum class Split { kTrain, kTest };

std::string to_string(Split split);
// Throws ConfigError for anything but "train" / "test".
Split parse_split(const std::string& text);

struct GeneratorParams {
  std::uint64_t seed = 7;
  int n_identities = 40;
  int bona_fide_per_identity = 10;
  int n_morphs = 300;
  double split_fraction = 0.75;
  int size = 64;
  double noise_std = 0.03;
  double blend = 0.5;

  // Throws ConfigError.
  void validate() const;
};

struct ManifestRecord {
  std::string sample_id;
  Split split = Split::kTrain;
  int label = kBonaFideLabel;
  std::string path;  // relative to the dataset root
  std::vector<int> source_ids;
};

struct DatasetManifest {
  int version = kManifestVersion;
  GeneratorParams params;
  std::filesystem::path root;
  std::vector<ManifestRecord> records;

  // Records of one split, sorted by sample_id.
  std::vector<ManifestRecord> split_records(Split split) const;
  std::vector<int> identities(Split split) const;
};

// Writes images/*.pgm, manifest.tsv and params.json under out_dir.
DatasetManifest generate_dataset(const GeneratorParams& params, const std::filesystem::path& out_dir);

// Reads manifest.tsv and params.json; checks labels against source ids and
// split disjointness. Throws IoError or FormatError.
DatasetManifest load_manifest(const std::filesystem::path& dir);

template <typename Real>
struct Batch {
  std::vector<Tensor<Real>> images;  // each [1, S, S]
  std::vector<int> labels;
  std::vector<std::string> sample_ids;
};

// Mirrors [C,H,W] along the width axis.
template <typename Real>
Tensor<Real> flip_horizontal(const Tensor<Real>& image);

// Bilinear resampling of [C,H,W] with half-pixel centres; returns the input
// unchanged when the size already matches.
template <typename Real>
Tensor<Real> resize_bilinear(const Tensor<Real>& image, std::size_t out_h, std::size_t out_w);

// Cached access to a dataset's images.
class DatasetReader {
 public:
  explicit DatasetReader(DatasetManifest manifest);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::vector<ManifestRecord>& records(Split split) const;

  // Pixels scaled to [0,1] (sample / maxval). indices index records(split).
  // With augment, each sample is mirrored with probability 1/2, decided by
  // (flip_seed, index). Throws IoError naming the sample_id.
  template <typename Real>
  Batch<Real> batch(Split split, std::span<const std::size_t> indices, bool augment,
                    std::uint64_t flip_seed, int target_size);

 private:
  const GrayImage& image(Split split, std::size_t index);

  DatasetManifest manifest_;
  std::vector<ManifestRecord> train_;
  std::vector<ManifestRecord> test_;
  std::vector<GrayImage> train_cache_;
  std::vector<GrayImage> test_cache_;
};

template <typename Real>
Batch<Real> load_batch(const DatasetManifest& manifest, Split split, std::span<const std::size_t> indices,
                       bool augment, std::uint64_t flip_seed, int target_size);

bool flip_decision(std::uint64_t flip_seed, std::size_t index);

}  // namespace omad
