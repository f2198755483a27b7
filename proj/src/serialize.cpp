#include "mret/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mret {

void append_f32_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

double read_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

void save_tensors(const std::filesystem::path& sidecar_path, const TensorMap& tensors,
                  const nlohmann::json& extra) {
  auto blob_path = sidecar_path;
  blob_path.replace_extension(".bin");

  std::string blob;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    table.push_back({{"name", name}, {"shape", t.shape()}, {"offset", blob.size()}, {"dtype", "float32"}});
    for (double v : t.data()) append_f32_le(blob, v);
  }

  nlohmann::json doc = extra.is_object() ? extra : nlohmann::json::object();
  doc["blob"] = blob_path.filename().string();
  doc["tensors"] = std::move(table);

  std::ofstream bin(blob_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw FormatError("cannot write " + blob_path.string());
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream js(sidecar_path, std::ios::trunc);
  if (!js) throw FormatError("cannot write " + sidecar_path.string());
  js << doc.dump(2) << '\n';
  if (!bin || !js) throw FormatError("write failed for " + sidecar_path.string());
}

TensorFile load_tensors(const std::filesystem::path& sidecar_path) {
  std::ifstream js(sidecar_path);
  if (!js) throw FormatError("cannot read " + sidecar_path.string());
  TensorFile file;
  try {
    file.sidecar = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed tensor sidecar " + sidecar_path.string() + ": " + e.what());
  }
  if (!file.sidecar.contains("blob") || !file.sidecar.contains("tensors"))
    throw FormatError("tensor sidecar " + sidecar_path.string() + " lacks 'blob' or 'tensors'");

  const auto blob_path = sidecar_path.parent_path() / file.sidecar["blob"].get<std::string>();
  std::ifstream bin(blob_path, std::ios::binary);
  if (!bin) throw FormatError("cannot read " + blob_path.string());
  std::ostringstream ss;
  ss << bin.rdbuf();
  const std::string blob = ss.str();
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

  for (const auto& entry : file.sidecar["tensors"]) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    if (entry.value("dtype", std::string("float32")) != "float32")
      throw FormatError("tensor " + name + " has unsupported dtype");
    const std::size_t n = shape_numel(shape);
    if (offset + 4 * n > blob.size())
      throw FormatError("tensor " + name + " extends past the end of " + blob_path.string());
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = read_f32_le(bytes + offset + 4 * i);
    file.tensors.emplace(name, Tensor(shape, std::move(data)));
  }
  return file;
}

}  // namespace mret
