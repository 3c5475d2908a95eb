// Checkpoint layout (all integers little-endian):
//   8 bytes   magic "SWMCKPT\0"
//   u32       format version
//   u64       header length in bytes
//   header    UTF-8 JSON: config, block table, normalization, discretization, history
//   payload   value_count IEEE-754 doubles, little-endian, in block-table order
#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "swm/cohort_json.hpp"
#include "swm/error.hpp"
#include "swm/worldmodel.hpp"

namespace swm::wm {
namespace {

constexpr char kMagic[8] = {'S', 'W', 'M', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw ParseError("checkpoint is truncated");
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, bytes.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

std::string serialize_checkpoint(const WorldModelParams& params) {
  nlohmann::json header;
  header["config"] = model_config_to_json(params.config);
  header["blocks"] = nlohmann::json::array();
  for (const auto& b : params.blocks) {
    header["blocks"].push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"offset", b.offset}});
  }
  header["normalization"] = cohort::normalization_to_json(params.normalization);
  header["discretization"] = cohort::discretization_to_json(params.discretization);
  header["history"] = nlohmann::json::array();
  for (const auto& r : params.history) {
    header["history"].push_back(
        {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"learning_rate", r.learning_rate}});
  }
  header["value_count"] = params.values.size();
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + static_cast<std::size_t>(params.values.size()) * 8);
  for (Eigen::Index i = 0; i < params.values.size(); ++i) put_le<double>(out, params.values(i));
  return out;
}

WorldModelParams parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a world-model checkpoint (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = get_le<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw ParseError("checkpoint header is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  pos += header_len;

  WorldModelParams p;
  try {
    p.config = model_config_from_json(header.at("config"));
    for (const auto& b : header.at("blocks")) {
      p.blocks.push_back({b.at("name").get<std::string>(), b.at("rows").get<int>(), b.at("cols").get<int>(),
                          b.at("offset").get<std::size_t>()});
    }
    p.normalization = cohort::normalization_from_json(header.at("normalization"));
    p.discretization = cohort::discretization_from_json(header.at("discretization"));
    for (const auto& r : header.at("history")) {
      p.history.push_back({r.at("epoch").get<int>(), r.at("train_loss").get<double>(), r.at("val_loss").get<double>(),
                           r.at("learning_rate").get<double>()});
    }
    const auto n = header.at("value_count").get<std::size_t>();
    if (p.blocks != layout(p.config)) throw ParseError("checkpoint block table does not match its config");
    if (n != p.blocks.back().offset + p.blocks.back().size()) throw ParseError("checkpoint value count mismatch");
    if (bytes.size() - pos != n * 8) throw ParseError("checkpoint payload size mismatch");
    p.values.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) p.values(static_cast<Eigen::Index>(i)) = get_le<double>(bytes, pos);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  if (!p.values.allFinite()) throw ParseError("checkpoint holds non-finite weights");
  return p;
}

void save_checkpoint(const WorldModelParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  const std::string bytes = serialize_checkpoint(params);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing '" + path + "'");
}

WorldModelParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace swm::wm
