#pragma once

#include <string>

#include "gshn/ablate.hpp"
#include "gshn/config.hpp"
#include "gshn/model.hpp"
#include "gshn/synthetic.hpp"
#include "gshn/train.hpp"

namespace gshn {

inline DatasetConfig dataset_config_from(const Config& c) {
  DatasetConfig d;
  d.n_train = static_cast<std::size_t>(c.get_int("data.n_train", 2000));
  d.n_val = static_cast<std::size_t>(c.get_int("data.n_val", 200));
  d.n_test = static_cast<std::size_t>(c.get_int("data.n_test", 200));
  d.d = static_cast<std::size_t>(c.get_int("data.d", 16));
  d.noise_sigma = c.get_double("data.noise_sigma", 0.1);
  d.seed = static_cast<std::uint64_t>(c.get_int("data.seed", 0));
  return d;
}

inline FusionMode fusion_mode_from(const std::string& s) {
  if (s == "trainable") return FusionMode::trainable_r;
  if (s == "fixed") return FusionMode::fixed_r;
  if (s == "gat_only") return FusionMode::gat_only;
  if (s == "snn_only") return FusionMode::snn_only;
  throw std::invalid_argument("config: unknown fusion mode " + s);
}

inline ModelConfig model_config_from(const Config& c) {
  ModelConfig m;
  m.d_in = static_cast<std::size_t>(c.get_int("data.d", 16));
  m.d_hidden = static_cast<std::size_t>(c.get_int("model.d_hidden", 64));
  m.d_mem = static_cast<std::size_t>(c.get_int("model.d_mem", 256));
  m.gat_layers = static_cast<std::size_t>(c.get_int("model.gat_layers", 2));
  m.T = static_cast<std::size_t>(c.get_int("model.T", 10));
  m.tf_layers = static_cast<std::size_t>(c.get_int("model.tf_layers", 2));
  m.tf_heads = static_cast<std::size_t>(c.get_int("model.tf_heads", 4));
  m.tf_ff = static_cast<std::size_t>(c.get_int("model.tf_ff", 256));
  m.seq_cap = static_cast<std::size_t>(c.get_int("model.seq_cap", 96));
  m.cl_temperature = c.get_double("model.cl_temperature", 0.07);
  m.use_smu = c.get_bool("model.use_smu", true);
  m.fusion_mode = fusion_mode_from(c.get("model.fusion", "trainable"));
  m.fixed_r = c.get_double("model.fixed_r", 1.0);
  m.stl.mask_prob = c.get_double("model.stl.mask_prob", 0.05);
  m.stl.gamma = c.get_double("model.stl.gamma", 2.0);
  m.stl.alpha = c.get_double("model.stl.alpha", 0.25);
  m.w_itm = c.get_double("model.w_itm", 1.0);
  m.w_mlm = c.get_double("model.w_mlm", 1.0);
  m.w_cl = c.get_double("model.w_cl", 1.0);
  m.w_stl = c.get_double("model.w_stl", 1.0);
  m.validate();
  return m;
}

inline TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  t.epochs = static_cast<std::size_t>(c.get_int("train.epochs", 20));
  t.freeze_epochs =
      static_cast<std::size_t>(c.get_int("train.freeze_epochs", 5));
  t.batch_size = static_cast<std::size_t>(c.get_int("batch.size", 16));
  t.momentum = c.get_double("train.momentum", 0.9);
  t.lr_visual = c.get_double("train.lr_visual", 1e-2);
  t.wd_visual = c.get_double("train.wd_visual", 5e-4);
  t.lr_text = c.get_double("train.lr_text", 1e-4);
  t.wd_text = c.get_double("train.wd_text", 1e-2);
  t.seed = static_cast<std::uint64_t>(c.get_int("train.seed", 0));
  t.similarity = c.get("batch.similarity", "cosine");
  t.refresh_every =
      static_cast<std::size_t>(c.get_int("batch.refresh_every", 1));
  t.carry = c.get_bool("train.carry", true);
  std::string mode = c.get("train.mode", "hard");
  if (mode == "hard") {
    t.train_mode = SnnMode::hard;
  } else if (mode == "relaxed") {
    t.train_mode = SnnMode::relaxed;
  } else {
    throw std::invalid_argument("config: unknown train.mode " + mode);
  }
  t.validate();
  return t;
}

}  // namespace gshn
