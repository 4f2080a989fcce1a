#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rankiqa/tensor.hpp"

namespace rankiqa {

enum class DistortionKind { GaussianBlur, GaussianNoise, JpegProxy };

std::string_view kind_name(DistortionKind kind);  // "gaussian_blur", ...
DistortionKind parse_kind(std::string_view name);  // also accepts blur, noise, jpeg

// Images are single-channel [H, W] tensors with values in [0, 1].

// Separable Gaussian blur with kernel radius ceil(3 sigma) and reflected
// borders. sigma = 0 returns the input unchanged.
Tensor gaussian_blur(const Tensor& image, double sigma);

// Zero-mean i.i.d. Gaussian field, deterministic per (seed, shape).
Tensor gaussian_noise_field(const Shape& shape, double sigma, std::uint64_t seed);

// image + gaussian_noise_field, clamped to [0, 1].
Tensor gaussian_noise(const Tensor& image, double sigma, std::uint64_t seed);

// JPEG-like degradation: 8x8 block DCT, AC coefficients quantised with the
// standard luminance table scaled by quality (1..100), inverse DCT, clamp and
// round to 8-bit levels. The DC coefficient is kept exact.
Tensor jpeg_proxy(const Tensor& image, int quality);

// Peak signal-to-noise ratio in dB for peak value 1. Identical images give +inf.
double psnr(const Tensor& reference, const Tensor& distorted);

struct DistortionSpec {
  DistortionKind kind = DistortionKind::GaussianBlur;
  // Blur/noise sigma ascending, or JPEG quality descending.
  std::vector<double> levels;
  std::uint64_t seed = 0;

  // Throws ConfigError unless there are >= 2 levels of strictly increasing severity.
  void validate() const;

  static DistortionSpec defaults(DistortionKind kind, std::uint64_t seed = 0);
};

struct RankedGroup {
  std::string reference_id;
  DistortionKind kind = DistortionKind::GaussianBlur;
  Tensor reference;
  // distorted[k] has level index k; lower index means higher quality.
  std::vector<Tensor> distorted;

  std::size_t size() const { return distorted.size(); }
  std::size_t ordered_pairs() const { return size() * (size() - 1) / 2; }
};

// Applies one distortion per level. Noise seeds are derived from DistortionSpec::seed,
// the reference id and the level index.
RankedGroup synthesize_ranked_group(const std::string& reference_id, const Tensor& reference,
                                    const DistortionSpec& spec);

// Procedural grayscale test image: multi-octave value noise overlaid with
// sharp-edged shapes and line strokes. Deterministic per seed.
Tensor synthetic_reference(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace rankiqa
