#include "hypergoal/binio.hpp"
#include "hypergoal/config.hpp"
#include "hypergoal/errors.hpp"
#include "hypergoal/trainer.hpp"

namespace hypergoal {

using nlohmann::json;

namespace {
constexpr const char* kFormat = "hypergoal-checkpoint";
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<unsigned char> bytes;
  json tensors = json::array();
  for (const auto& [group, params] : ckpt.groups)
    for (const auto& [name, t] : params.entries()) {
      tensors.push_back({{"group", group}, {"name", name}, {"shape", t.shape()}});
      binio::append_f32(bytes, t.data());
    }
  binio::write_file(dir / "ckpt.bin", bytes);
  json desc = {{"format", kFormat},
               {"version", kCheckpointVersion},
               {"variant", to_string(ckpt.variant)},
               {"epoch", ckpt.epoch},
               {"rng_state", ckpt.rng_state},
               {"env", ckpt.env},
               {"config", ckpt.config},
               {"proprio_mean", ckpt.proprio_mean},
               {"proprio_std", ckpt.proprio_std},
               {"tensors", tensors},
               {"bin_checksum", binio::hex64(binio::fnv1a64(bytes))}};
  binio::write_text(dir / "ckpt.json", desc.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto desc_path = dir / "ckpt.json";
  const auto bin_path = dir / "ckpt.bin";
  if (!std::filesystem::exists(desc_path) || !std::filesystem::exists(bin_path))
    throw FormatError("checkpoint files missing in " + dir.string());
  json desc;
  try {
    desc = json::parse(binio::read_text(desc_path));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint descriptor is not valid JSON: ") + e.what());
  }
  if (desc.value("format", "") != kFormat) throw FormatError("not a hypergoal checkpoint descriptor");
  if (!desc.contains("version") || desc["version"] != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " + desc.value("version", json()).dump());

  const auto bytes = binio::read_file(bin_path);
  try {
    Checkpoint ckpt;
    ckpt.variant = parse_variant(desc.at("variant").get<std::string>());
    ckpt.epoch = desc.at("epoch");
    ckpt.rng_state = desc.at("rng_state");
    ckpt.env = desc.at("env").get<EnvConfig>();
    ckpt.config = desc.at("config").get<TrainConfig>();
    ckpt.proprio_mean = desc.at("proprio_mean").get<Proprio>();
    ckpt.proprio_std = desc.at("proprio_std").get<Proprio>();

    std::size_t expected = 0;
    for (const auto& t : desc.at("tensors")) expected += shape_size(t.at("shape").get<Shape>());
    if (bytes.size() != 4 * expected)
      throw ShapeError("checkpoint data has " + std::to_string(bytes.size()) + " bytes, descriptor needs " +
                       std::to_string(4 * expected));
    if (binio::hex64(binio::fnv1a64(bytes)) != desc.at("bin_checksum").get<std::string>())
      throw FormatError("checkpoint data checksum mismatch");

    const auto values = binio::decode_f32(bytes);
    std::size_t offset = 0;
    for (const auto& t : desc.at("tensors")) {
      const Shape shape = t.at("shape").get<Shape>();
      const std::size_t n = shape_size(shape);
      ckpt.groups[t.at("group").get<std::string>()].add(
          t.at("name").get<std::string>(),
          Tensor(shape, std::vector<double>(values.begin() + offset, values.begin() + offset + n)));
      offset += n;
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint descriptor is malformed: ") + e.what());
  }
}

}  // namespace hypergoal
