#include <string_view>

#include "mret/config.hpp"

namespace mret {

namespace fs = std::filesystem;

namespace {
constexpr std::string_view kVelocityPrefix = "opt.velocity.";
constexpr const char* kFormat = "mret-checkpoint/1";
}  // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  TensorMap tensors = ckpt.params;
  for (const auto& [name, v] : ckpt.opt.velocity) tensors.emplace(std::string(kVelocityPrefix) + name, v);
  nlohmann::json extra{{"format", kFormat},
                       {"config", to_json(ckpt.config)},
                       {"optimizer", {{"step", ckpt.opt.step}}},
                       {"epoch", ckpt.epoch},
                       {"history", ckpt.history}};
  save_tensors(dir / "manifest.json", tensors, extra);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) throw FormatError("not a checkpoint directory (no manifest.json): " + dir.string());
  auto file = load_tensors(manifest);
  if (file.sidecar.value("format", std::string()) != kFormat)
    throw FormatError("unsupported checkpoint format in " + manifest.string());
  Checkpoint ckpt;
  ckpt.config = run_config_from_json(file.sidecar.at("config"));
  ckpt.opt.step = file.sidecar.at("optimizer").value("step", std::int64_t{0});
  ckpt.epoch = file.sidecar.value("epoch", 0);
  ckpt.history = file.sidecar.value("history", nlohmann::json::array());
  for (auto& [name, t] : file.tensors) {
    if (name.rfind(kVelocityPrefix, 0) == 0)
      ckpt.opt.velocity.emplace(name.substr(kVelocityPrefix.size()), std::move(t));
    else
      ckpt.params.emplace(name, std::move(t));
  }
  check_params(ckpt.params, ckpt.config.model);
  return ckpt;
}

}  // namespace mret
