#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gshn/train.hpp"

namespace gshn {

// Named ablation cells from Tables 2/5 and Figs 3/4: the fusion-ratio modes,
// SMU on/off, and the spike-window sweep.
inline ModelConfig apply_ablation_mode(ModelConfig cfg,
                                       const std::string& mode) {
  if (mode == "trainable") {
    cfg.fusion_mode = FusionMode::trainable_r;
  } else if (mode == "fixed1") {
    cfg.fusion_mode = FusionMode::fixed_r;
    cfg.fixed_r = 1.0;
  } else if (mode == "fixed0") {
    cfg.fusion_mode = FusionMode::fixed_r;
    cfg.fixed_r = 0.0;
  } else if (mode == "gat_only") {
    cfg.fusion_mode = FusionMode::gat_only;
  } else if (mode == "snn_only") {
    cfg.fusion_mode = FusionMode::snn_only;
  } else if (mode == "smu_off") {
    cfg.use_smu = false;
  } else if (mode == "T20") {
    cfg.T = 20;
  } else {
    throw std::invalid_argument("ablate: unknown mode " + mode);
  }
  return cfg;
}

struct AblationRun {
  std::string mode;
  std::uint64_t seed = 0;
  double r1 = 0.0;  // mean of both retrieval directions on the test split
};

struct AblationSummary {
  std::string mode;
  double mean = 0.0;
  double stdev = 0.0;
  std::size_t n = 0;
};

// Train one cell from scratch and score mean R@1 on the test split.
inline AblationRun run_ablation_cell(const Dataset& ds,
                                     const ModelConfig& model_cfg,
                                     const TrainConfig& train_cfg,
                                     const std::string& mode,
                                     std::uint64_t seed) {
  ModelConfig mc = apply_ablation_mode(model_cfg, mode);
  TrainConfig tc = train_cfg;
  tc.seed = seed;
  GshnModel m = make_model(mc, ds.vocab.size(), RngStream(seed, 0x0DE1));
  train(m, ds, tc);
  RetrievalMetrics r = evaluate_retrieval(m, ds.split("test"), ds.vocab);
  return {mode, seed, 0.5 * (r.r1_i2t + r.r1_t2i)};
}

struct AblationTable {
  std::vector<AblationRun> runs;
  std::vector<AblationSummary> summaries;
};

// Paired design: every mode sees the same seed list. Cells are independent
// models, so they run on a worker pool; results are seed-deterministic
// regardless of thread count.
inline AblationTable run_ablation(const Dataset& ds,
                                  const ModelConfig& model_cfg,
                                  const TrainConfig& train_cfg,
                                  const std::vector<std::string>& modes,
                                  const std::vector<std::uint64_t>& seeds,
                                  std::size_t workers = 0) {
  if (workers == 0)
    workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  std::vector<AblationRun> cells;
  for (const auto& mode : modes)
    for (std::uint64_t seed : seeds) cells.push_back({mode, seed, 0.0});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      cells[i] = run_ablation_cell(ds, model_cfg, train_cfg, cells[i].mode,
                                   cells[i].seed);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w + 1 < std::min(workers, cells.size()); ++w)
    pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  AblationTable table;
  table.runs = std::move(cells);
  for (const auto& mode : modes) {
    AblationSummary sum;
    sum.mode = mode;
    std::vector<double> vals;
    for (const auto& run : table.runs)
      if (run.mode == mode) vals.push_back(run.r1);
    for (double v : vals) sum.mean += v;
    sum.n = vals.size();
    sum.mean /= static_cast<double>(sum.n);
    for (double v : vals) sum.stdev += (v - sum.mean) * (v - sum.mean);
    sum.stdev = sum.n > 1 ? std::sqrt(sum.stdev / (sum.n - 1)) : 0.0;
    table.summaries.push_back(std::move(sum));
  }
  return table;
}

// One row per (mode, seed) plus aggregate rows.
inline void write_ablation_csv(const std::string& path,
                               const AblationTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ablate: cannot write " + path);
  out << "row,mode,seed,r1_mean,r1_stdev,n\n";
  for (const auto& r : table.runs)
    out << "run," << r.mode << "," << r.seed << "," << format_double(r.r1)
        << ",,\n";
  for (const auto& s : table.summaries)
    out << "aggregate," << s.mode << ",," << format_double(s.mean) << ","
        << format_double(s.stdev) << "," << s.n << "\n";
}

inline double summary_mean(const AblationTable& table,
                           const std::string& mode) {
  for (const auto& s : table.summaries)
    if (s.mode == mode) return s.mean;
  throw std::invalid_argument("ablate: no summary for mode " + mode);
}

}  // namespace gshn
