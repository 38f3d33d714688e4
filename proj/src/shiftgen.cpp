#include "mgtta/shiftgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mgtta/rng.hpp"

namespace mgtta {

namespace {
constexpr std::uint64_t kAssignTag = 0xa551;
constexpr std::uint64_t kShuffleTag = 0x5bff;
constexpr std::uint64_t kSampleTag = 0x5a17;
}  // namespace

bool is_validation_kind(CorruptionKind k) {
  return k == CorruptionKind::speckle_noise || k == CorruptionKind::spatter ||
         k == CorruptionKind::gaussian_blur || k == CorruptionKind::saturate;
}

bool is_test_kind(CorruptionKind k) {
  return k != CorruptionKind::identity && !is_validation_kind(k);
}

std::vector<CorruptionKind> validation_kinds() {
  return {CorruptionKind::speckle_noise, CorruptionKind::spatter, CorruptionKind::gaussian_blur,
          CorruptionKind::saturate};
}

std::vector<CorruptionKind> test_kinds() {
  return {CorruptionKind::gaussian_noise, CorruptionKind::shot_noise,
          CorruptionKind::impulse_noise, CorruptionKind::defocus_blur, CorruptionKind::contrast,
          CorruptionKind::brightness,    CorruptionKind::pixelate};
}

std::string kind_name(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::identity: return "identity";
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
    case CorruptionKind::shot_noise: return "shot_noise";
    case CorruptionKind::impulse_noise: return "impulse_noise";
    case CorruptionKind::defocus_blur: return "defocus_blur";
    case CorruptionKind::contrast: return "contrast";
    case CorruptionKind::brightness: return "brightness";
    case CorruptionKind::pixelate: return "pixelate";
    case CorruptionKind::speckle_noise: return "speckle_noise";
    case CorruptionKind::spatter: return "spatter";
    case CorruptionKind::gaussian_blur: return "gaussian_blur";
    case CorruptionKind::saturate: return "saturate";
  }
  throw std::invalid_argument("kind_name: unknown corruption kind");
}

CorruptionKind kind_from_string(const std::string& s) {
  for (int k = 0; k <= static_cast<int>(CorruptionKind::saturate); ++k)
    if (kind_name(static_cast<CorruptionKind>(k)) == s) return static_cast<CorruptionKind>(k);
  throw std::invalid_argument("unknown corruption kind: " + s);
}

// --- dataset ---------------------------------------------------------------

namespace {

struct Jitter {
  double theta;
  double scale;
  double tx, ty;
  double phase;  // free parameter some families use
};

double render_pixel(int family, double u, double v, const Jitter& j) {
  const double pi = std::numbers::pi;
  switch (family) {
    case 0:  // vertical bars
      return 0.5 + 0.45 * std::sin(2.0 * pi * 2.0 * u + j.phase);
    case 1: {  // rings
      const double r = std::hypot(u, v);
      return 0.5 + 0.45 * std::sin(2.0 * pi * 2.5 * r + j.phase);
    }
    case 2:  // checkers
      return 0.5 + 0.45 * std::sin(2.0 * pi * 1.8 * u) * std::sin(2.0 * pi * 1.8 * v);
    case 3:  // linear ramp, direction in phase
      return std::clamp(0.5 + 0.55 * (u * std::cos(j.phase) + v * std::sin(j.phase)), 0.0, 1.0);
    case 4: {  // cross
      const double a = std::exp(-(u * u) / (0.16 * 0.16));
      const double b = std::exp(-(v * v) / (0.16 * 0.16));
      return 0.12 + 0.80 * std::max(a, b);
    }
    case 5: {  // dot lattice
      const double spacing = 0.55;
      const double du = u - spacing * std::round(u / spacing);
      const double dv = v - spacing * std::round(v / spacing);
      const double d2 = du * du + dv * dv;
      return 0.12 + 0.80 * std::exp(-d2 / (2.0 * 0.10 * 0.10));
    }
    case 6: {  // wedge
      double ang = std::atan2(v, u) - j.phase;
      while (ang > pi) ang -= 2.0 * pi;
      while (ang < -pi) ang += 2.0 * pi;
      const double inside = 1.0 / (1.0 + std::exp((std::abs(ang) - pi / 4.0) / 0.06));
      const double r = std::hypot(u, v);
      const double radial = 1.0 / (1.0 + std::exp((r - 0.95) / 0.05));
      return 0.12 + 0.80 * inside * radial;
    }
    case 7:  // diagonal stripes
      return 0.5 + 0.45 * std::sin(2.0 * pi * 3.2 * (u + v) / std::numbers::sqrt2 + j.phase);
    default:
      throw std::invalid_argument("render_pixel: family out of range");
  }
}

}  // namespace

LabeledSet gen_dataset(const DatasetSpec& spec) {
  if (spec.image_side < 8) throw std::invalid_argument("gen_dataset: image_side must be >= 8");
  if (spec.num_classes < 2 || spec.num_classes > 8)
    throw std::invalid_argument("gen_dataset: num_classes must be in [2, 8]");
  if (spec.samples_per_class < 1)
    throw std::invalid_argument("gen_dataset: samples_per_class must be >= 1");

  const int side = spec.image_side;
  const Index dim = static_cast<Index>(side) * side;
  const Index n = static_cast<Index>(spec.num_classes) * spec.samples_per_class;

  LabeledSet set;
  set.num_classes = spec.num_classes;
  set.image_side = side;
  set.images = Tensor::matrix(n, dim);
  set.labels.resize(static_cast<std::size_t>(n));

  Index row = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
      Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(c),
                       static_cast<std::uint64_t>(s)));
      Jitter j;
      j.theta = rng.uniform(-0.25, 0.25);
      j.scale = std::exp(rng.uniform(std::log(0.8), std::log(1.25)));
      j.tx = rng.uniform(-0.15, 0.15);
      j.ty = rng.uniform(-0.15, 0.15);
      j.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

      const double ct = std::cos(-j.theta), st = std::sin(-j.theta);
      for (int py = 0; py < side; ++py) {
        for (int px = 0; px < side; ++px) {
          const double x = (px + 0.5) / side * 2.0 - 1.0;
          const double y = (py + 0.5) / side * 2.0 - 1.0;
          const double xs = (x - j.tx) / j.scale;
          const double ys = (y - j.ty) / j.scale;
          const double u = ct * xs - st * ys;
          const double v = st * xs + ct * ys;
          double val = std::clamp(render_pixel(c, u, v, j), 0.0, 1.0);
          // snap to f32 so dataset files round-trip exactly
          set.images(row, static_cast<Index>(py) * side + px) =
              static_cast<double>(static_cast<float>(val));
        }
      }
      set.labels[static_cast<std::size_t>(row)] = c;
    }
  }
  return set;
}

// --- corruption ------------------------------------------------------------

const Scalar SeverityTable::gaussian_noise_sigma[5] = {0.04, 0.08, 0.12, 0.18, 0.26};
const Scalar SeverityTable::shot_noise_photons[5] = {60.0, 25.0, 12.0, 5.0, 3.0};
const Scalar SeverityTable::impulse_noise_prob[5] = {0.03, 0.06, 0.09, 0.17, 0.27};
const Scalar SeverityTable::defocus_blur_radius[5] = {1.0, 1.5, 2.0, 3.0, 4.0};
const Scalar SeverityTable::contrast_factor[5] = {0.60, 0.45, 0.30, 0.20, 0.10};
const Scalar SeverityTable::brightness_delta[5] = {0.10, 0.18, 0.26, 0.34, 0.42};
const int SeverityTable::pixelate_block[5] = {2, 4, 8, 8, 16};
const Scalar SeverityTable::speckle_noise_sigma[5] = {0.10, 0.18, 0.28, 0.40, 0.55};
const Scalar SeverityTable::spatter_coverage[5] = {0.05, 0.09, 0.14, 0.20, 0.28};
const Scalar SeverityTable::gaussian_blur_sigma[5] = {0.6, 0.9, 1.3, 1.9, 2.6};
const Scalar SeverityTable::saturate_factor[5] = {1.3, 1.7, 2.2, 3.0, 4.2};

namespace {

int infer_side(const Tensor& img) {
  if (img.rank() != 1) throw std::invalid_argument("corrupt: expected a flat rank-1 image");
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(img.size()))));
  if (static_cast<Index>(side) * side != img.size())
    throw std::invalid_argument("corrupt: image length is not a perfect square");
  return side;
}

using Grid = std::vector<double>;  // side*side row-major

Grid to_grid(const Tensor& img) {
  Grid g(img.data().begin(), img.data().end());
  return g;
}

Tensor from_grid(const Grid& g) {
  Tensor t = Tensor::vector(static_cast<Index>(g.size()));
  for (Index i = 0; i < t.size(); ++i) t(i) = std::clamp(g[static_cast<std::size_t>(i)], 0.0, 1.0);
  return t;
}

inline int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

Grid convolve_separable(const Grid& g, int side, const std::vector<double>& kernel) {
  const int h = static_cast<int>(kernel.size()) / 2;
  Grid tmp(g.size()), out(g.size());
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      for (int k = -h; k <= h; ++k)
        acc += kernel[static_cast<std::size_t>(k + h)] *
               g[static_cast<std::size_t>(y) * side + reflect(x + k, side)];
      tmp[static_cast<std::size_t>(y) * side + x] = acc;
    }
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      for (int k = -h; k <= h; ++k)
        acc += kernel[static_cast<std::size_t>(k + h)] *
               tmp[static_cast<std::size_t>(reflect(y + k, side)) * side + x];
      out[static_cast<std::size_t>(y) * side + x] = acc;
    }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int h = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * h + 1));
  double sum = 0.0;
  for (int i = -h; i <= h; ++i) {
    k[static_cast<std::size_t>(i + h)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + h)];
  }
  for (double& v : k) v /= sum;
  return k;
}

Grid disk_blur(const Grid& g, int side, double radius) {
  const int h = static_cast<int>(std::ceil(radius));
  std::vector<double> w;
  std::vector<std::pair<int, int>> off;
  double sum = 0.0;
  for (int dy = -h; dy <= h; ++dy)
    for (int dx = -h; dx <= h; ++dx) {
      // soft-edged disk
      const double d = std::hypot(static_cast<double>(dx), static_cast<double>(dy));
      const double wt = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      if (wt > 0.0) {
        w.push_back(wt);
        off.emplace_back(dx, dy);
        sum += wt;
      }
    }
  Grid out(g.size());
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k)
        acc += w[k] * g[static_cast<std::size_t>(reflect(y + off[k].second, side)) * side +
                        reflect(x + off[k].first, side)];
      out[static_cast<std::size_t>(y) * side + x] = acc / sum;
    }
  return out;
}

}  // namespace

Tensor corrupt(const Tensor& img, const CorruptionSpec& spec) {
  if (spec.severity < 0 || spec.severity > 5)
    throw std::invalid_argument("corrupt: severity must be in 0..5");
  if (spec.severity == 0 || spec.kind == CorruptionKind::identity) return img;

  const int side = infer_side(img);
  const int lvl = spec.severity - 1;
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(spec.kind),
                   static_cast<std::uint64_t>(spec.severity)));
  Grid g = to_grid(img);

  switch (spec.kind) {
    case CorruptionKind::gaussian_noise: {
      const double s = SeverityTable::gaussian_noise_sigma[lvl];
      for (double& v : g) v += rng.normal(0.0, s);
      break;
    }
    case CorruptionKind::shot_noise: {
      const double lam = SeverityTable::shot_noise_photons[lvl];
      for (double& v : g) v = rng.poisson(v * lam) / lam;
      break;
    }
    case CorruptionKind::impulse_noise: {
      const double p = SeverityTable::impulse_noise_prob[lvl];
      for (double& v : g)
        if (rng.uniform() < p) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
      break;
    }
    case CorruptionKind::defocus_blur:
      g = disk_blur(g, side, SeverityTable::defocus_blur_radius[lvl]);
      break;
    case CorruptionKind::contrast: {
      const double c = SeverityTable::contrast_factor[lvl];
      double mean = 0.0;
      for (double v : g) mean += v;
      mean /= static_cast<double>(g.size());
      for (double& v : g) v = (v - mean) * c + mean;
      break;
    }
    case CorruptionKind::brightness: {
      const double b = SeverityTable::brightness_delta[lvl];
      for (double& v : g) v += b;
      break;
    }
    case CorruptionKind::pixelate: {
      int k = SeverityTable::pixelate_block[lvl];
      while (side % k != 0) --k;  // sides not divisible fall back to the next divisor
      for (int by = 0; by < side; by += k)
        for (int bx = 0; bx < side; bx += k) {
          double acc = 0.0;
          for (int y = 0; y < k; ++y)
            for (int x = 0; x < k; ++x)
              acc += g[static_cast<std::size_t>(by + y) * side + bx + x];
          acc /= (k * k);
          for (int y = 0; y < k; ++y)
            for (int x = 0; x < k; ++x)
              g[static_cast<std::size_t>(by + y) * side + bx + x] = acc;
        }
      break;
    }
    case CorruptionKind::speckle_noise: {
      const double s = SeverityTable::speckle_noise_sigma[lvl];
      for (double& v : g) v += v * rng.normal(0.0, s);
      break;
    }
    case CorruptionKind::spatter: {
      const double coverage = SeverityTable::spatter_coverage[lvl];
      Grid field(g.size());
      for (double& v : field) v = rng.normal();
      field = convolve_separable(field, side, gaussian_kernel(2.0));
      Grid sorted = field;
      std::nth_element(sorted.begin(),
                       sorted.begin() + static_cast<std::ptrdiff_t>(
                                            (1.0 - coverage) * (sorted.size() - 1)),
                       sorted.end());
      const double thresh =
          sorted[static_cast<std::size_t>((1.0 - coverage) * (sorted.size() - 1))];
      for (std::size_t i = 0; i < g.size(); ++i)
        if (field[i] > thresh) g[i] += 0.8 * (0.95 - g[i]);
      break;
    }
    case CorruptionKind::gaussian_blur:
      g = convolve_separable(g, side, gaussian_kernel(SeverityTable::gaussian_blur_sigma[lvl]));
      break;
    case CorruptionKind::saturate: {
      const double s = SeverityTable::saturate_factor[lvl];
      for (double& v : g) v = 0.5 + (v - 0.5) * s;
      break;
    }
    case CorruptionKind::identity:
      break;
  }
  return from_grid(g);
}

// --- streams ---------------------------------------------------------------

std::vector<Batch> make_stream(const LabeledSet& set, const std::vector<CorruptionSpec>& specs,
                               StreamOrder order, int batch, std::uint64_t seed) {
  if (batch < 1) throw std::invalid_argument("make_stream: batch must be >= 1");
  if (specs.empty()) throw std::invalid_argument("make_stream: corruption spec list is empty");
  if (order == StreamOrder::single && specs.size() != 1)
    throw std::invalid_argument("make_stream: single order takes exactly one corruption spec");

  const Index n = set.size();
  std::vector<std::size_t> assign(static_cast<std::size_t>(n), 0);
  if (order == StreamOrder::mixed && specs.size() > 1) {
    Rng assign_rng(mix_seed(seed, kAssignTag));
    for (auto& a : assign) a = static_cast<std::size_t>(assign_rng.index(specs.size()));
  }

  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng shuffle_rng(mix_seed(seed, kShuffleTag));
  shuffle_rng.shuffle(perm);

  const Index dim = set.images.cols();
  const Index num_batches = n / batch;
  std::vector<Batch> out;
  out.reserve(static_cast<std::size_t>(num_batches));
  for (Index bi = 0; bi < num_batches; ++bi) {
    Batch b;
    b.images = Tensor::matrix(batch, dim);
    b.labels.resize(static_cast<std::size_t>(batch));
    b.kinds.resize(static_cast<std::size_t>(batch));
    for (Index r = 0; r < batch; ++r) {
      const Index src = perm[static_cast<std::size_t>(bi * batch + r)];
      const CorruptionSpec& cs = specs[assign[static_cast<std::size_t>(src)]];
      CorruptionSpec per_sample = cs;
      per_sample.seed = mix_seed(cs.seed, kSampleTag, static_cast<std::uint64_t>(src));
      Tensor row = Tensor::vector(dim);
      for (Index j = 0; j < dim; ++j) row(j) = set.images(src, j);
      Tensor corrupted = corrupt(row, per_sample);
      for (Index j = 0; j < dim; ++j) b.images(r, j) = corrupted(j);
      b.labels[static_cast<std::size_t>(r)] = set.labels[static_cast<std::size_t>(src)];
      b.kinds[static_cast<std::size_t>(r)] = cs.kind;
    }
    out.push_back(std::move(b));
  }
  return out;
}

LabeledSet corrupt_set(const LabeledSet& set, CorruptionKind kind, int severity,
                       std::uint64_t seed) {
  LabeledSet out = set;
  const Index dim = set.images.cols();
  for (Index i = 0; i < set.size(); ++i) {
    CorruptionSpec cs{kind, severity, mix_seed(seed, kSampleTag, static_cast<std::uint64_t>(i))};
    Tensor row = Tensor::vector(dim);
    for (Index j = 0; j < dim; ++j) row(j) = set.images(i, j);
    Tensor corrupted = corrupt(row, cs);
    for (Index j = 0; j < dim; ++j) out.images(i, j) = corrupted(j);
  }
  return out;
}

LabeledSet subset(const LabeledSet& set, const std::vector<Index>& idx) {
  LabeledSet out;
  out.num_classes = set.num_classes;
  out.image_side = set.image_side;
  out.images = Tensor::matrix(static_cast<Index>(idx.size()), set.images.cols());
  out.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (Index j = 0; j < set.images.cols(); ++j) out.images(static_cast<Index>(i), j) = set.images(idx[i], j);
    out.labels[i] = set.labels[static_cast<std::size_t>(idx[i])];
  }
  return out;
}

}  // namespace mgtta
