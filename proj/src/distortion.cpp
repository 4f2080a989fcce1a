#include "rankiqa/distortion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "rankiqa/errors.hpp"
#include "rankiqa/seeding.hpp"

namespace rankiqa {

namespace {

void require_image(const Tensor& image, std::string_view op) {
  if (image.rank() != 2 || image.empty())
    throw ShapeError(std::string(op) + " expects a non-empty [H, W] image, got " +
                     shape_string(image.shape()));
}

// Mirror index into [0, n) without repeating the edge sample.
std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

double unit_uniform(std::mt19937_64& engine) {
  // (0, 1), never zero so log() stays finite.
  return (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53;
}

constexpr std::array<int, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

std::array<double, 64> dct_basis() {
  std::array<double, 64> b{};
  for (int u = 0; u < 8; ++u) {
    const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
    for (int x = 0; x < 8; ++x) b[u * 8 + x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
  }
  return b;
}

}  // namespace

std::string_view kind_name(DistortionKind kind) {
  switch (kind) {
    case DistortionKind::GaussianBlur: return "gaussian_blur";
    case DistortionKind::GaussianNoise: return "gaussian_noise";
    case DistortionKind::JpegProxy: return "jpeg_proxy";
  }
  return "unknown";
}

DistortionKind parse_kind(std::string_view name) {
  if (name == "gaussian_blur" || name == "blur" || name == "gb") return DistortionKind::GaussianBlur;
  if (name == "gaussian_noise" || name == "noise" || name == "gn") return DistortionKind::GaussianNoise;
  if (name == "jpeg_proxy" || name == "jpeg") return DistortionKind::JpegProxy;
  throw ConfigError("unknown distortion kind '" + std::string(name) + "'");
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
  require_image(image, "gaussian_blur");
  if (!(sigma >= 0.0)) throw ConfigError("blur sigma must be non-negative");
  if (sigma == 0.0) return image;

  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    norm += w;
  }
  for (double& w : kernel) w /= norm;

  const auto H = static_cast<std::ptrdiff_t>(image.dim(0));
  const auto W = static_cast<std::ptrdiff_t>(image.dim(1));
  std::vector<double> tmp(image.size());
  for (std::ptrdiff_t y = 0; y < H; ++y)
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<std::size_t>(k + radius)] * image[static_cast<std::size_t>(y * W + reflect(x + k, W))];
      tmp[static_cast<std::size_t>(y * W + x)] = acc;
    }
  Tensor out(image.shape());
  for (std::ptrdiff_t y = 0; y < H; ++y)
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(reflect(y + k, H) * W + x)];
      out[static_cast<std::size_t>(y * W + x)] = static_cast<float>(acc);
    }
  return out;
}

Tensor gaussian_noise_field(const Shape& shape, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  std::uint64_t stream = seed;
  for (std::size_t d : shape) stream = derive_seed(stream, d);
  std::mt19937_64 engine(stream);
  Tensor field(shape);
  if (sigma == 0.0) return field;
  for (std::size_t i = 0; i < field.size(); i += 2) {
    // Box-Muller; each draw yields two independent normals.
    const double r = std::sqrt(-2.0 * std::log(unit_uniform(engine)));
    const double t = 2.0 * std::numbers::pi * unit_uniform(engine);
    field[i] = static_cast<float>(sigma * r * std::cos(t));
    if (i + 1 < field.size()) field[i + 1] = static_cast<float>(sigma * r * std::sin(t));
  }
  return field;
}

Tensor gaussian_noise(const Tensor& image, double sigma, std::uint64_t seed) {
  require_image(image, "gaussian_noise");
  if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  if (sigma == 0.0) return image;
  Tensor out = gaussian_noise_field(image.shape(), sigma, seed);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(image[i] + out[i], 0.0f, 1.0f);
  return out;
}

Tensor jpeg_proxy(const Tensor& image, int quality) {
  require_image(image, "jpeg_proxy");
  if (quality < 1 || quality > 100)
    throw ConfigError("jpeg quality must be in [1, 100], got " + std::to_string(quality));

  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<double, 64> qtable{};
  for (int i = 0; i < 64; ++i) qtable[i] = std::clamp((kLumaTable[i] * scale + 50) / 100, 1, 255);
  static const std::array<double, 64> basis = dct_basis();

  const std::size_t H = image.dim(0), W = image.dim(1);
  Tensor out(image.shape());
  std::array<double, 64> block{}, coef{}, tmp{};
  for (std::size_t by = 0; by < H; by += 8)
    for (std::size_t bx = 0; bx < W; bx += 8) {
      // Partial blocks are padded by edge replication.
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
          const std::size_t sy = std::min(by + y, H - 1), sx = std::min(bx + x, W - 1);
          block[y * 8 + x] = static_cast<double>(image[sy * W + sx]) * 255.0 - 128.0;
        }
      // Separable 2-D DCT-II: rows then columns.
      for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u) {
          double acc = 0.0;
          for (int x = 0; x < 8; ++x) acc += basis[u * 8 + x] * block[y * 8 + x];
          tmp[y * 8 + u] = acc;
        }
      for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
          double acc = 0.0;
          for (int y = 0; y < 8; ++y) acc += basis[v * 8 + y] * tmp[y * 8 + u];
          coef[v * 8 + u] = acc;
        }
      for (int i = 1; i < 64; ++i) coef[i] = std::round(coef[i] / qtable[i]) * qtable[i];
      for (int v = 0; v < 8; ++v)
        for (int x = 0; x < 8; ++x) {
          double acc = 0.0;
          for (int u = 0; u < 8; ++u) acc += basis[u * 8 + x] * coef[v * 8 + u];
          tmp[v * 8 + x] = acc;
        }
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          double acc = 0.0;
          for (int v = 0; v < 8; ++v) acc += basis[v * 8 + y] * tmp[v * 8 + x];
          block[y * 8 + x] = acc;
        }
      for (std::size_t y = 0; y < 8 && by + y < H; ++y)
        for (std::size_t x = 0; x < 8 && bx + x < W; ++x) {
          const double level = std::clamp(std::round(block[y * 8 + x] + 128.0), 0.0, 255.0);
          out[(by + y) * W + bx + x] = static_cast<float>(level / 255.0);
        }
    }
  return out;
}

double psnr(const Tensor& reference, const Tensor& distorted) {
  if (reference.shape() != distorted.shape())
    throw ShapeError("psnr shape mismatch " + shape_string(reference.shape()) + " vs " +
                     shape_string(distorted.shape()));
  double mse = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = static_cast<double>(reference[i]) - distorted[i];
    mse += d * d;
  }
  mse /= static_cast<double>(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

void DistortionSpec::validate() const {
  if (levels.size() < 2)
    throw ConfigError(std::string(kind_name(kind)) + " needs at least 2 levels");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double v = levels[i];
    if (kind == DistortionKind::JpegProxy) {
      if (v < 1 || v > 100 || v != std::floor(v))
        throw ConfigError("jpeg levels must be integer qualities in [1, 100]");
      if (i && !(v < levels[i - 1]))
        throw ConfigError("jpeg qualities must strictly decrease with severity");
    } else {
      if (!(v >= 0.0)) throw ConfigError(std::string(kind_name(kind)) + " sigmas must be non-negative");
      if (i && !(v > levels[i - 1]))
        throw ConfigError(std::string(kind_name(kind)) + " sigmas must strictly increase with severity");
    }
  }
}

DistortionSpec DistortionSpec::defaults(DistortionKind kind, std::uint64_t seed) {
  switch (kind) {
    case DistortionKind::GaussianBlur: return {kind, {1, 2, 3, 4, 5}, seed};
    case DistortionKind::GaussianNoise: return {kind, {0.02, 0.05, 0.1, 0.2, 0.4}, seed};
    case DistortionKind::JpegProxy: return {kind, {80, 60, 40, 20, 10}, seed};
  }
  throw ConfigError("unknown distortion kind");
}

RankedGroup synthesize_ranked_group(const std::string& reference_id, const Tensor& reference,
                                    const DistortionSpec& spec) {
  spec.validate();
  require_image(reference, "synthesize_ranked_group");
  RankedGroup group{reference_id, spec.kind, reference, {}};
  group.distorted.reserve(spec.levels.size());
  const std::uint64_t ref_seed = derive_seed(spec.seed, fnv1a(reference_id));
  for (std::size_t k = 0; k < spec.levels.size(); ++k) {
    const double level = spec.levels[k];
    switch (spec.kind) {
      case DistortionKind::GaussianBlur: group.distorted.push_back(gaussian_blur(reference, level)); break;
      case DistortionKind::GaussianNoise:
        group.distorted.push_back(gaussian_noise(reference, level, derive_seed(ref_seed, k)));
        break;
      case DistortionKind::JpegProxy:
        group.distorted.push_back(jpeg_proxy(reference, static_cast<int>(level)));
        break;
    }
  }
  return group;
}

Tensor synthetic_reference(std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height == 0 || width == 0) throw ShapeError("synthetic reference needs a non-empty size");
  std::mt19937_64 rng(derive_seed(seed, 0x5eed));
  auto uniform = [&rng](double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); };

  const auto H = static_cast<double>(height), W = static_cast<double>(width);
  std::vector<double> img(height * width, 0.0);

  // Value-noise octaves with 1/f-like amplitude falloff.
  double amplitude = 0.5;
  for (std::size_t cells = 3; cells <= 48; cells *= 2, amplitude *= 0.55) {
    const std::size_t gw = cells + 2;
    std::vector<double> grid(gw * gw);
    for (double& g : grid) g = uniform(-1.0, 1.0);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double fy = static_cast<double>(y) / H * static_cast<double>(cells);
        const double fx = static_cast<double>(x) / W * static_cast<double>(cells);
        const auto iy = static_cast<std::size_t>(fy), ix = static_cast<std::size_t>(fx);
        double ty = fy - static_cast<double>(iy), tx = fx - static_cast<double>(ix);
        ty = ty * ty * (3 - 2 * ty);
        tx = tx * tx * (3 - 2 * tx);
        const double a = grid[iy * gw + ix], b = grid[iy * gw + ix + 1];
        const double c = grid[(iy + 1) * gw + ix], d = grid[(iy + 1) * gw + ix + 1];
        img[y * width + x] += amplitude * ((a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty);
      }
  }
  for (double& v : img) v = 0.5 + 0.5 * v;

  // Hard-edged ellipses and rectangles.
  const int shapes = 6 + static_cast<int>(rng() % 6);
  for (int s = 0; s < shapes; ++s) {
    const double cy = uniform(0, H), cx = uniform(0, W);
    const double ry = uniform(0.05, 0.3) * H, rx = uniform(0.05, 0.3) * W;
    const double tone = uniform(0.05, 0.95), alpha = uniform(0.5, 1.0);
    const bool ellipse = rng() & 1;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = (static_cast<double>(y) - cy) / ry, dx = (static_cast<double>(x) - cx) / rx;
        const bool inside = ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside) img[y * width + x] = (1 - alpha) * img[y * width + x] + alpha * tone;
      }
  }

  // Thin strokes.
  const int strokes = 3 + static_cast<int>(rng() % 5);
  for (int s = 0; s < strokes; ++s) {
    const double y0 = uniform(0, H), x0 = uniform(0, W), y1 = uniform(0, H), x1 = uniform(0, W);
    const double tone = uniform(0, 1);
    const double len = std::hypot(y1 - y0, x1 - x0);
    const auto steps = static_cast<std::size_t>(len * 2) + 1;
    for (std::size_t t = 0; t <= steps; ++t) {
      const double f = static_cast<double>(t) / static_cast<double>(steps);
      const auto y = static_cast<std::size_t>(std::clamp(y0 + f * (y1 - y0), 0.0, H - 1));
      const auto x = static_cast<std::size_t>(std::clamp(x0 + f * (x1 - x0), 0.0, W - 1));
      img[y * width + x] = tone;
    }
  }

  Tensor out({height, width});
  for (std::size_t i = 0; i < img.size(); ++i)
    out[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
  return out;
}

}  // namespace rankiqa
