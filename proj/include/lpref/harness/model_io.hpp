#pragma once

#include <string>

#include "lpref/harness/checkpoint.hpp"
#include "lpref/harness/config.hpp"

namespace lpref {

// Bridges between live models and checkpoints. The config echo embedded in
// every checkpoint is the canonical RunConfig text of the producing run; loads
// reconstruct the architecture from it and then copy weights by name.

inline Checkpoint checkpoint_of(const Denoiser& net, const std::string& config_echo) {
  Checkpoint ckpt;
  ckpt.kind = Checkpoint::Kind::denoiser;
  ckpt.config_echo = config_echo;
  for (auto& [name, p] : net.named_parameters()) ckpt.tensors.emplace_back(name, p.value());
  return ckpt;
}

inline Checkpoint checkpoint_of(const Lrm& model, const std::string& config_echo) {
  Checkpoint ckpt;
  ckpt.kind = Checkpoint::Kind::lrm;
  ckpt.config_echo = config_echo;
  for (auto& [name, p] : model.named_parameters()) ckpt.tensors.emplace_back(name, p.value());
  return ckpt;
}

inline Checkpoint load_checkpoint_as(const std::string& path, Checkpoint::Kind want) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != want) {
    throw IoError(std::string("checkpoint kind mismatch: expected ") + checkpoint_kind_name(want) +
                  ", found " + checkpoint_kind_name(ckpt.kind) + ": " + path);
  }
  return ckpt;
}

inline Denoiser denoiser_from_checkpoint(const Checkpoint& ckpt) {
  RunConfig cfg = parse_config(ckpt.config_echo);
  Denoiser net(cfg.make_denoiser_config(), RngStream(0, 0));
  assign_parameters(net.named_parameters(), ckpt);
  return net;
}

inline Lrm lrm_from_checkpoint(const Checkpoint& ckpt) {
  RunConfig cfg = parse_config(ckpt.config_echo);
  Lrm model(Denoiser(cfg.make_lrm_backbone_config(), RngStream(0, 0)), cfg.make_encoder(),
            cfg.make_lrm_config(), RngStream(0, 1));
  assign_parameters(model.named_parameters(), ckpt);
  return model;
}

inline Denoiser load_denoiser(const std::string& path) {
  return denoiser_from_checkpoint(load_checkpoint_as(path, Checkpoint::Kind::denoiser));
}

inline Lrm load_lrm(const std::string& path) {
  return lrm_from_checkpoint(load_checkpoint_as(path, Checkpoint::Kind::lrm));
}

}  // namespace lpref
