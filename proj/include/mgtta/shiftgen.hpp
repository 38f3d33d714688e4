#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgtta/tensor.hpp"

namespace mgtta {

enum class CorruptionKind {
  identity,
  gaussian_noise,
  shot_noise,
  impulse_noise,
  defocus_blur,
  contrast,
  brightness,
  pixelate,
  speckle_noise,
  spatter,
  gaussian_blur,
  saturate,
};

// The held-out kinds reserved for optimizer pre-training; the rest (minus
// identity) form the test suite.
bool is_validation_kind(CorruptionKind k);
bool is_test_kind(CorruptionKind k);
std::string kind_name(CorruptionKind k);
CorruptionKind kind_from_string(const std::string& s);
std::vector<CorruptionKind> validation_kinds();
std::vector<CorruptionKind> test_kinds();

struct DatasetSpec {
  int num_classes = 8;
  int samples_per_class = 100;
  int image_side = 32;
  std::uint64_t seed = 7;
};

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::identity;
  int severity = 5;  // 0..5; 0 is identity regardless of kind
  std::uint64_t seed = 0;
};

struct LabeledSet {
  Tensor images;            // N x side^2, values in [0,1]
  std::vector<int> labels;  // in [0, num_classes)
  int num_classes = 0;
  int image_side = 0;

  Index size() const { return images.rows(); }
};

// Eight procedural pattern families (bars, rings, checkers, ramps, crosses,
// dot lattices, wedges, diagonal stripes) with seeded per-sample jitter in
// position, scale and rotation.
LabeledSet gen_dataset(const DatasetSpec& spec);

// Severity parameter tables, level 1..5 per kind (level-1 mildest). Kept in
// one place so docs and tests read the same constants.
struct SeverityTable {
  static const Scalar gaussian_noise_sigma[5];
  static const Scalar shot_noise_photons[5];
  static const Scalar impulse_noise_prob[5];
  static const Scalar defocus_blur_radius[5];
  static const Scalar contrast_factor[5];
  static const Scalar brightness_delta[5];
  static const int pixelate_block[5];
  static const Scalar speckle_noise_sigma[5];
  static const Scalar spatter_coverage[5];
  static const Scalar gaussian_blur_sigma[5];
  static const Scalar saturate_factor[5];
};

// img is one flattened side x side image in [0,1]; output stays in [0,1].
Tensor corrupt(const Tensor& img, const CorruptionSpec& spec);

enum class StreamOrder { single, mixed };

struct Batch {
  Tensor images;  // B x input_dim
  std::vector<int> labels;
  std::vector<CorruptionKind> kinds;  // per sample, for reporting only
};

// Shuffles the set, assigns corruptions (one kind for `single`, uniform
// draw per sample for `mixed`) and packs full batches. Labels ride along
// for scoring; the adaptation path never reads them.
std::vector<Batch> make_stream(const LabeledSet& set, const std::vector<CorruptionSpec>& specs,
                               StreamOrder order, int batch, std::uint64_t seed);

// Applies one corruption to every image of a set (per-sample derived seeds).
LabeledSet corrupt_set(const LabeledSet& set, CorruptionKind kind, int severity,
                       std::uint64_t seed);

LabeledSet subset(const LabeledSet& set, const std::vector<Index>& idx);

}  // namespace mgtta
