#include "mret/model.hpp"

namespace mret {

namespace {

std::int64_t block_params(std::int64_t d, std::int64_t mlp) {
  const std::int64_t norms = 2 * 2 * d;
  const std::int64_t attention = 4 * (d * d + d);
  const std::int64_t ffn = d * mlp + mlp + mlp * d + d;
  return norms + attention + ffn;
}

double block_macs(double s, double d, double mlp) {
  const double norms = 2 * s * d;
  const double qkv = 3 * s * d * d;
  const double logits = s * s * d;
  const double weighted = s * s * d;
  const double out = s * d * d;
  const double ffn = 2 * s * d * mlp;
  return norms + qkv + logits + weighted + out + ffn;
}

}  // namespace

std::int64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::int64_t d = cfg.dim, mlp = cfg.mlp_dim, hh = cfg.hidden();
  const std::int64_t m = cfg.tokens(), t = cfg.time_steps();
  const std::int64_t embed = d * cfg.multires.tube_size() + d;
  const std::int64_t spatial = d + (m + 1) * d + cfg.spatial_layers * block_params(d, mlp) + 2 * d;
  const std::int64_t temporal = d + (t + 1) * d + cfg.temporal_layers * block_params(d, mlp) + 2 * d;
  const std::int64_t head = d * hh + hh + hh + 1;
  return embed + spatial + temporal + head;
}

FlopCount count_macs(const ModelConfig& cfg, int frames) {
  cfg.validate();
  if (frames < 1) throw ConfigError("frame count must be >= 1");
  const double d = cfg.dim, mlp = cfg.mlp_dim, hh = cfg.hidden();
  const double m = cfg.tokens();
  const double groups = (frames + cfg.multires.scales - 1) / cfg.multires.scales;
  FlopCount c;
  c.embedding = groups * m * cfg.multires.tube_size() * d;
  c.spatial = groups * (cfg.spatial_layers * block_macs(m + 1, d, mlp) + d);
  c.temporal = cfg.temporal_layers * block_macs(groups + 1, d, mlp) + d;
  c.head = d * hh + hh;
  return c;
}

double count_flops(const ModelConfig& cfg, int frames) { return count_macs(cfg, frames).total() / 1e9; }

}  // namespace mret
