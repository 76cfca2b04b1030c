#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gshn/batching.hpp"
#include "gshn/eval.hpp"
#include "gshn/model.hpp"
#include "gshn/optimizer.hpp"

namespace gshn {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t freeze_epochs = 5;
  std::size_t batch_size = 16;
  double momentum = 0.9;
  double lr_visual = 1e-2, wd_visual = 5e-4;  // SNN-side group (+ STL head)
  double lr_text = 1e-4, wd_text = 1e-2;      // transformer/embeddings/heads
  std::uint64_t seed = 0;
  std::string similarity = "cosine";  // batch.similarity: cosine | itm
  std::size_t refresh_every = 1;      // recall index rebuild cadence (epochs)
  bool carry = true;
  SnnMode train_mode = SnnMode::hard;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs < 1");
    if (freeze_epochs >= epochs)
      throw std::invalid_argument("TrainConfig: freeze_epochs >= epochs");
    if (batch_size < 2)
      throw std::invalid_argument("TrainConfig: batch_size < 2");
    if (similarity != "cosine" && similarity != "itm")
      throw std::invalid_argument("TrainConfig: unknown similarity " +
                                  similarity);
    if (refresh_every < 1)
      throw std::invalid_argument("TrainConfig: refresh_every < 1");
  }
};

struct MetricsRecord {
  std::size_t epoch = 0;
  double itm = 0.0, mlm = 0.0, cl = 0.0, stl = 0.0, total = 0.0;
  double firing_rate = 0.0;
  RetrievalMetrics val;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string metrics_csv_header() {
  return "epoch,itm,mlm,cl,stl,total,firing_rate,"
         "r1_i2t,r5_i2t,r10_i2t,r1_t2i,r5_t2i,r10_t2i";
}

inline std::string metrics_csv_row(const MetricsRecord& r) {
  std::string out = std::to_string(r.epoch);
  for (double v : {r.itm, r.mlm, r.cl, r.stl, r.total, r.firing_rate,
                   r.val.r1_i2t, r.val.r5_i2t, r.val.r10_i2t, r.val.r1_t2i,
                   r.val.r5_t2i, r.val.r10_t2i})
    out += "," + format_double(v);
  return out;
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<MetricsRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("metrics: cannot write " + path);
  out << metrics_csv_header() << "\n";
  for (const auto& r : records) out << metrics_csv_row(r) << "\n";
}

// Names the first non-finite tensor for the NaN-abort diagnostic.
inline void check_finite(GshnModel& m, double loss, std::size_t epoch,
                         std::size_t batch) {
  if (std::isfinite(loss)) return;
  std::string where = "loss";
  for (Parameter* p : all_params(m)) {
    if (!p->value.all_finite()) {
      where = p->name + ".value";
      break;
    }
    if (!p->grad.all_finite()) {
      where = p->name + ".grad";
      break;
    }
  }
  throw std::runtime_error("train: non-finite " + where + " at epoch " +
                           std::to_string(epoch) + " batch " +
                           std::to_string(batch));
}

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  double seconds = 0.0;  // wall clock; kept out of the deterministic CSV
};

// Algorithm: freeze SNN dynamics for the first freeze_epochs (STL off), then
// unfreeze and add STL; batches are recall-ordered streams over a shuffled
// partition of the train split so every item appears once per epoch.
inline TrainResult train(GshnModel& m, const Dataset& ds,
                         const TrainConfig& cfg,
                         const std::function<void(const MetricsRecord&)>&
                             on_epoch = {}) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();
  auto train_items = ds.split("train");
  auto val_items = ds.split("val");
  std::size_t B = cfg.batch_size;
  if (train_items.size() < B)
    throw std::invalid_argument("train: train split smaller than batch size");

  SgdOptimizer opt({{visual_group(m), cfg.lr_visual, cfg.wd_visual},
                    {text_group(m), cfg.lr_text, cfg.wd_text}},
                   cfg.momentum);
  RngStream root(cfg.seed, 0x7281);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    bool frozen = epoch <= cfg.freeze_epochs;
    for (Parameter* p : zeta_params(m)) p->frozen = frozen;

    RecallIndex index = build_recall_index(m, train_items, ds.vocab);

    RngStream epoch_rng = root.split(epoch);
    std::vector<std::size_t> perm(train_items.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    RngStream shuffle_rng = epoch_rng.split(0);
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[shuffle_rng.next_below(i)]);

    MetricsRecord rec;
    rec.epoch = epoch;
    std::size_t n_batches = perm.size() / B;  // drop-last
    bool use_itm_sim = cfg.similarity == "itm" && epoch > 1;
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      std::vector<std::size_t> chunk(perm.begin() + bi * B,
                                     perm.begin() + (bi + 1) * B);
      // Sub-index over the chunk; the anchor is its first item and the batch
      // is the chunk reordered by descending similarity to the anchor.
      RecallIndex sub;
      sub.img = Tensor({B, m.cfg.d_hidden});
      sub.txt = Tensor({B, m.cfg.d_hidden});
      std::vector<const SceneRecord*> chunk_items;
      for (std::size_t c = 0; c < B; ++c) {
        sub.ids.push_back(index.ids[chunk[c]]);
        for (std::size_t k = 0; k < m.cfg.d_hidden; ++k) {
          sub.img.at(c, k) = index.img.at(chunk[c], k);
          sub.txt.at(c, k) = index.txt.at(chunk[c], k);
        }
        chunk_items.push_back(train_items[chunk[c]]);
      }
      std::vector<std::size_t> order;
      if (use_itm_sim) {
        std::vector<std::size_t> candidates;
        for (std::size_t c = 1; c < B; ++c) candidates.push_back(c);
        order = recall_batch(sub, 0, B,
                             itm_scores(m, chunk_items, ds.vocab, 0,
                                        candidates));
      } else {
        order = recall_batch(sub, 0, B);
      }
      std::vector<BatchItem> batch =
          assemble_stream(chunk_items, ds.vocab, order);

      StepConfig sc;
      sc.mode = cfg.train_mode;
      sc.with_grad = true;
      sc.use_stl = !frozen;
      sc.carry = cfg.carry;
      StepLosses l =
          model_step(m, ds.vocab, batch, epoch_rng.split(1 + bi), sc);
      check_finite(m, l.total, epoch, bi);
      opt.step();

      rec.itm += l.itm;
      rec.mlm += l.mlm;
      rec.cl += l.cl;
      rec.stl += l.stl;
      rec.total += l.total;
      rec.firing_rate += l.mean_firing_rate;
    }
    double inv = n_batches ? 1.0 / static_cast<double>(n_batches) : 0.0;
    rec.itm *= inv;
    rec.mlm *= inv;
    rec.cl *= inv;
    rec.stl *= inv;
    rec.total *= inv;
    rec.firing_rate *= inv;
    if (!val_items.empty())
      rec.val = evaluate_retrieval(m, val_items, ds.vocab);
    result.metrics.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  for (Parameter* p : zeta_params(m)) p->frozen = false;
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

}  // namespace gshn
