#include "cps/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

namespace cps {

using nlohmann::json;

void write_f32_le(std::ostream& os, std::span<const float> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> read_f32_le(std::istream& is, std::size_t count) {
  std::vector<char> bytes(count * 4);
  is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(is.gcount()) != bytes.size()) {
    throw DataError("truncated float block: expected " + std::to_string(count) + " values");
  }
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + static_cast<std::size_t>(b)])) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

void write_params(std::ostream& os, const ParamVector& params) {
  json layout = json::array();
  for (const auto& e : params.layout()) layout.push_back({{"name", e.name}, {"shape", e.shape}});
  json header = {{"format", "cps-params"},
                 {"version", kCheckpointVersion},
                 {"fingerprint", params.fingerprint()},
                 {"count", params.size()},
                 {"layout", layout}};
  os << header.dump() << '\n';
  write_f32_le(os, params.values());
}

ParamVector read_params(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("checkpoint: missing header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }
  try {
    if (header.at("format") != "cps-params") throw DataError("checkpoint: unexpected format tag");
    if (header.at("version").get<int>() != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
    std::vector<LayerEntry> layout;
    std::size_t total = 0;
    for (const auto& e : header.at("layout")) {
      layout.push_back({e.at("name").get<std::string>(), e.at("shape").get<Shape>()});
      total += shape_size(layout.back().shape);
    }
    const auto count = header.at("count").get<std::size_t>();
    if (count != total) throw DataError("checkpoint: header count disagrees with layout");
    auto values = read_f32_le(is, count);
    if (is.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint: trailing bytes after payload");
    return ParamVector(std::move(values), std::move(layout), header.at("fingerprint").get<std::string>());
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: bad header field: ") + e.what());
  }
}

void save_params(const std::string& path, const ParamVector& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint " + path);
  write_params(os, params);
  if (!os) throw DataError("failed writing checkpoint " + path);
}

ParamVector load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  return read_params(is);
}

}  // namespace cps
