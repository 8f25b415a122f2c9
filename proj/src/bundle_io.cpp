#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "screenmark/models.hpp"

namespace screenmark {

static_assert(std::endian::native == std::endian::little, "bundle blobs are written in native little-endian order");

namespace {

constexpr char kMagic[8] = {'S', 'M', 'B', 'U', 'N', 'D', 'L', 'E'};

nlohmann::json hyper_to_json(const Hyperparams& hp) {
  return {{"S", hp.tile_size},
          {"M", hp.message_bits},
          {"c", hp.center_half},
          {"unet_depth", hp.unet_depth},
          {"unet_base_width", hp.unet_base_width},
          {"unet_max_width", hp.unet_max_width},
          {"decoder_blocks", hp.decoder_blocks},
          {"decoder_base_width", hp.decoder_base_width},
          {"decoder_max_width", hp.decoder_max_width},
          {"decoder_head", hp.decoder_head}};
}

Hyperparams hyper_from_json(const nlohmann::json& j) {
  Hyperparams hp;
  hp.tile_size = j.at("S").get<int>();
  hp.message_bits = j.at("M").get<int>();
  hp.center_half = j.at("c").get<int>();
  hp.unet_depth = j.at("unet_depth").get<int>();
  hp.unet_base_width = j.at("unet_base_width").get<int>();
  hp.unet_max_width = j.at("unet_max_width").get<int>();
  hp.decoder_blocks = j.at("decoder_blocks").get<int>();
  hp.decoder_base_width = j.at("decoder_base_width").get<int>();
  hp.decoder_max_width = j.at("decoder_max_width").get<int>();
  hp.decoder_head = j.at("decoder_head").get<std::string>();
  return hp;
}

}  // namespace

std::string serialize_bundle(const ModelBundle& bundle) {
  nlohmann::json tensors = nlohmann::json::array();
  size_t offset = 0;
  for (const nn::Parameter* p : bundle.parameters()) {
    tensors.push_back({{"name", p->name}, {"shape", p->shape}, {"offset", offset}, {"count", p->size()}});
    offset += p->size() * sizeof(float);
  }
  const nlohmann::json manifest = {{"format", "screenmark-bundle"},
                                   {"version", ModelBundle::kVersion},
                                   {"hyperparams", hyper_to_json(bundle.hyper())},
                                   {"blob_bytes", offset},
                                   {"tensors", tensors}};
  const std::string text = manifest.dump();
  std::string out(kMagic, sizeof(kMagic));
  const auto len = static_cast<uint32_t>(text.size());
  char len_bytes[4];
  std::memcpy(len_bytes, &len, 4);
  out.append(len_bytes, 4);
  out += text;
  for (const nn::Parameter* p : bundle.parameters()) {
    out.append(reinterpret_cast<const char*>(p->value.data()), p->size() * sizeof(float));
  }
  return out;
}

ModelBundle deserialize_bundle(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw BundleError("corrupt model archive: bad magic");
  }
  uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 4);
  if (bytes.size() < 12 + static_cast<size_t>(len)) throw BundleError("corrupt model archive: truncated manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(12, len));
  } catch (const nlohmann::json::exception& e) {
    throw BundleError(std::string("corrupt model archive: ") + e.what());
  }

  Hyperparams hp;
  std::map<std::string, nlohmann::json> index;
  size_t blob_bytes = 0;
  try {
    if (manifest.at("format").get<std::string>() != "screenmark-bundle") throw BundleError("not a screenmark model archive");
    const int version = manifest.at("version").get<int>();
    if (version != ModelBundle::kVersion) {
      throw BundleError("model archive version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(ModelBundle::kVersion) + ")");
    }
    hp = hyper_from_json(manifest.at("hyperparams"));
    blob_bytes = manifest.at("blob_bytes").get<size_t>();
    for (const auto& t : manifest.at("tensors")) index[t.at("name").get<std::string>()] = t;
  } catch (const nlohmann::json::exception& e) {
    throw BundleError(std::string("corrupt model archive manifest: ") + e.what());
  }

  const size_t blob_start = 12 + static_cast<size_t>(len);
  if (bytes.size() != blob_start + blob_bytes) throw BundleError("corrupt model archive: blob size mismatch (truncated?)");

  std::unique_ptr<ModelBundle> bundle;
  try {
    bundle = std::make_unique<ModelBundle>(hp);
  } catch (const std::invalid_argument& e) {
    throw BundleError(std::string("model archive hyperparameters invalid: ") + e.what());
  }
  auto params = bundle->parameters();
  if (params.size() != index.size()) {
    throw BundleError("model archive holds " + std::to_string(index.size()) + " tensors, architecture needs " +
                      std::to_string(params.size()));
  }
  for (nn::Parameter* p : params) {
    auto it = index.find(p->name);
    if (it == index.end()) throw BundleError("model archive lacks tensor " + p->name);
    const auto shape = it->second.at("shape").get<std::vector<int>>();
    if (shape != p->shape) throw BundleError("shape mismatch for tensor " + p->name + " (hyperparams disagree with stored tensors)");
    const size_t offset = it->second.at("offset").get<size_t>();
    const size_t count = it->second.at("count").get<size_t>();
    if (count != p->size() || offset + count * sizeof(float) > blob_bytes) throw BundleError("corrupt tensor entry " + p->name);
    std::memcpy(p->value.data(), bytes.data() + blob_start + offset, count * sizeof(float));
  }
  return std::move(*bundle);
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  const std::string bytes = serialize_bundle(bundle);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw BundleError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw BundleError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError("cannot open model archive " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_bundle(ss.str());
}

}  // namespace screenmark
