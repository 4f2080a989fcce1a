#include "rankiqa/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "rankiqa/errors.hpp"

namespace rankiqa {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      if (!tok.empty()) break;
    } else {
      tok.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
  if (tok.empty()) throw FormatError(path.string() + ": truncated PNM header");
  return tok;
}

std::size_t header_number(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = header_token(in, path);
  if (!std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    throw FormatError(path.string() + ": bad header field '" + tok + "'");
  return std::stoul(tok);
}

}  // namespace

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image " + path.string());
  const std::string magic = header_token(in, path);
  if (magic != "P5" && magic != "P6")
    throw FormatError(path.string() + ": unsupported image format " + magic + " (expected P5 or P6)");
  const std::size_t w = header_number(in, path);
  const std::size_t h = header_number(in, path);
  const std::size_t maxval = header_number(in, path);
  if (w == 0 || h == 0) throw FormatError(path.string() + ": empty image");
  if (maxval == 0 || maxval > 255) throw FormatError(path.string() + ": only 8-bit images are supported");

  const std::size_t channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> raw(w * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw FormatError(path.string() + ": truncated pixel data");

  Tensor img({h, w});
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < w * h; ++i) {
    if (channels == 1) {
      img[i] = raw[i] * scale;
    } else {
      const float luma = 0.299f * raw[3 * i] + 0.587f * raw[3 * i + 1] + 0.114f * raw[3 * i + 2];
      img[i] = std::min(1.0f, luma * scale);
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2) throw ShapeError("write_pgm expects an [H, W] image, got " + shape_string(image.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write image " + path.string());
  out << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  std::vector<unsigned char> raw(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image[i], 0.0f, 1.0f);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace rankiqa
