#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

#include "rankiqa/errors.hpp"
#include "rankiqa/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rankiqa {

namespace {

constexpr char kMagic[4] = {'R', 'I', 'Q', 'A'};

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

void append_u32(std::string& out, std::uint32_t v) {
  v = to_le(v);
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::uint32_t read_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return to_le(v);
}

}  // namespace

void save_checkpoint(const fs::path& path, const ModelCheckpoint& ckpt) {
  json header;
  header["arch"] = ckpt.model.spec.to_string();
  header["phase"] = std::string(phase_name(ckpt.phase));
  header["iteration"] = ckpt.iteration;
  header["forward_count"] = ckpt.forward_count;
  header["learning_rate"] = ckpt.learning_rate;
  header["config"] = ckpt.config.to_json();
  header["rng"] = {{"seed", ckpt.rng_seed}, {"iteration", ckpt.iteration}};
  header["params"] = json::array();
  for (const auto& p : ckpt.model.params) header["params"].push_back({{"name", p.name}, {"shape", p.value.shape()}});
  const std::string text = header.dump();

  std::string blob(kMagic, 4);
  blob.push_back(static_cast<char>(ModelCheckpoint::kFormatVersion));
  append_u32(blob, static_cast<std::uint32_t>(text.size()));
  blob += text;
  for (const auto& p : ckpt.model.params)
    for (float v : p.value.data()) append_u32(blob, std::bit_cast<std::uint32_t>(v));

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint " + tmp.string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw FormatError("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

ModelCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string();
  if (blob.size() < 9 || std::memcmp(blob.data(), kMagic, 4) != 0)
    throw FormatError(where + " does not start with the RIQA magic bytes");
  const auto version = static_cast<std::uint8_t>(blob[4]);
  if (version != ModelCheckpoint::kFormatVersion)
    throw FormatError(where + ": version mismatch (file has format " + std::to_string(version) +
                      ", this build reads " + std::to_string(ModelCheckpoint::kFormatVersion) + ")");
  const std::uint32_t header_len = read_u32(blob.data() + 5);
  if (blob.size() < 9 + static_cast<std::size_t>(header_len)) throw FormatError(where + " is truncated inside its header");

  ModelCheckpoint ckpt;
  std::size_t offset = 9 + header_len;
  try {
    const json header = json::parse(blob.begin() + 9, blob.begin() + static_cast<std::ptrdiff_t>(offset));
    ckpt.model.spec = NetworkSpec::parse(header.at("arch").get<std::string>());
    ckpt.model.params = make_parameters(ckpt.model.spec);
    ckpt.phase = parse_phase(header.at("phase").get<std::string>());
    ckpt.iteration = header.at("iteration").get<std::size_t>();
    ckpt.forward_count = header.at("forward_count").get<std::size_t>();
    ckpt.learning_rate = header.at("learning_rate").get<double>();
    ckpt.config = TrainConfig::from_json(header.at("config"));
    ckpt.rng_seed = header.at("rng").at("seed").get<std::uint64_t>();
    const auto& params = header.at("params");
    if (params.size() != ckpt.model.params.size())
      throw FormatError(where + ": parameter count does not match the architecture");
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = ckpt.model.params[i];
      if (params[i].at("name").get<std::string>() != p.name ||
          params[i].at("shape").get<Shape>() != p.value.shape())
        throw FormatError(where + ": parameter " + std::to_string(i) + " does not match the architecture");
      if (blob.size() < offset + 4 * p.value.size()) throw FormatError(where + " is truncated in parameter " + p.name);
      for (float& v : p.value.data()) {
        v = std::bit_cast<float>(read_u32(blob.data() + offset));
        offset += 4;
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(where + ": corrupt header (" + e.what() + ")");
  } catch (const ConfigError& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(where + ": " + e.what());
  }
  if (offset != blob.size()) throw FormatError(where + " has trailing bytes after the parameters");
  return ckpt;
}

}  // namespace rankiqa
