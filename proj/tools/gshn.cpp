#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "gshn/ablate.hpp"
#include "gshn/checkpoint.hpp"
#include "gshn/config_map.hpp"
#include "gshn/eval.hpp"
#include "gshn/gradcheck_suite.hpp"
#include "gshn/train.hpp"

namespace fs = std::filesystem;
using namespace gshn;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  long long seed = -1;  // overrides config seeds when >= 0
};

Config load_effective_config(const CommonOpts& opts) {
  Config cfg;
  if (!opts.config_path.empty()) cfg = load_config(opts.config_path);
  if (opts.seed >= 0) {
    cfg.set("train.seed", std::to_string(opts.seed));
    cfg.set("data.seed", std::to_string(opts.seed));
  }
  return cfg;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const Config& cfg,
                    const std::vector<std::string>& artifacts) {
  nlohmann::json m = {
      {"command", command},
      {"config_hash", cfg.hash()},
      {"config", cfg.kv},
      {"artifacts", artifacts},
  };
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  out << m.dump(2) << "\n";
}

int cmd_generate_data(const CommonOpts& opts) {
  Config cfg = load_effective_config(opts);
  DatasetConfig dc = dataset_config_from(cfg);
  Dataset ds = generate_dataset(dc);
  fs::create_directories(opts.out_dir);
  std::string path = (fs::path(opts.out_dir) / "dataset.jsonl").string();
  write_dataset(path, ds);
  write_manifest(opts.out_dir, "generate-data", cfg, {"dataset.jsonl"});
  std::printf("wrote %zu scenes to %s\n", ds.records.size(), path.c_str());
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  Config cfg = load_effective_config(opts);
  std::string data_path = cfg.get("data", "");
  Dataset ds;
  if (data_path.empty()) {
    ds = generate_dataset(dataset_config_from(cfg));
  } else {
    ds = load_dataset(data_path);
  }
  ModelConfig mc = model_config_from(cfg);
  mc.d_in = ds.d;
  TrainConfig tc = train_config_from(cfg);
  GshnModel m = make_model(mc, ds.vocab.size(), RngStream(tc.seed, 0x0DE1));

  fs::create_directories(opts.out_dir);
  TrainResult result = train(m, ds, tc, [](const MetricsRecord& r) {
    std::printf("epoch %zu  total %.4f  itm %.4f  mlm %.4f  cl %.4f  "
                "stl %.4f  val R@1 %.3f/%.3f\n",
                r.epoch, r.total, r.itm, r.mlm, r.cl, r.stl, r.val.r1_i2t,
                r.val.r1_t2i);
    std::fflush(stdout);
  });

  std::string metrics_path = (fs::path(opts.out_dir) / "metrics.csv").string();
  write_metrics_csv(metrics_path, result.metrics);
  std::string ckpt_path = (fs::path(opts.out_dir) / "checkpoint.bin").string();
  save_checkpoint(ckpt_path, all_params(m), cfg.serialize());
  {
    std::ofstream t(fs::path(opts.out_dir) / "timing.log");
    t << "train_seconds=" << format_double(result.seconds) << "\n";
  }
  write_manifest(opts.out_dir, "train", cfg,
                 {"metrics.csv", "checkpoint.bin", "timing.log"});
  std::printf("trained %zu epochs in %.1fs\n", tc.epochs, result.seconds);
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& ckpt_path,
             const std::string& data_path, const std::string& split) {
  Dataset ds = load_dataset(data_path);
  // model shape comes from the checkpoint's embedded config
  Config cfg = parse_config_text(read_checkpoint_config(ckpt_path));
  ModelConfig mc = model_config_from(cfg);
  mc.d_in = ds.d;
  GshnModel m = make_model(mc, ds.vocab.size(), RngStream(0, 0));
  load_checkpoint(ckpt_path, all_params(m));

  RetrievalMetrics r = evaluate_retrieval(m, ds.split(split), ds.vocab);
  fs::create_directories(opts.out_dir);
  std::string path = (fs::path(opts.out_dir) / "retrieval.csv").string();
  {
    std::ofstream out(path);
    out << "direction,r1,r5,r10\n";
    out << "i2t," << format_double(r.r1_i2t) << "," << format_double(r.r5_i2t)
        << "," << format_double(r.r10_i2t) << "\n";
    out << "t2i," << format_double(r.r1_t2i) << "," << format_double(r.r5_t2i)
        << "," << format_double(r.r10_t2i) << "\n";
  }
  write_manifest(opts.out_dir, "eval", cfg, {"retrieval.csv"});
  std::printf("R@1 %.3f/%.3f  R@5 %.3f/%.3f  R@10 %.3f/%.3f (i2t/t2i)\n",
              r.r1_i2t, r.r1_t2i, r.r5_i2t, r.r5_t2i, r.r10_i2t, r.r10_t2i);
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int cmd_ablate(const CommonOpts& opts) {
  Config cfg = load_effective_config(opts);
  std::string data_path = cfg.get("data", "");
  Dataset ds = data_path.empty()
                   ? generate_dataset(dataset_config_from(cfg))
                   : load_dataset(data_path);
  ModelConfig mc = model_config_from(cfg);
  mc.d_in = ds.d;
  TrainConfig tc = train_config_from(cfg);

  std::vector<std::string> modes = split_list(cfg.get(
      "ablate.modes", "trainable,fixed1,gat_only,snn_only,smu_off,T20"));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(cfg.get("ablate.seeds", "1,2,3,4,5")))
    seeds.push_back(std::stoull(s));

  AblationTable table = run_ablation(ds, mc, tc, modes, seeds);
  fs::create_directories(opts.out_dir);
  std::string path = (fs::path(opts.out_dir) / "ablation.csv").string();
  write_ablation_csv(path, table);
  write_manifest(opts.out_dir, "ablate", cfg, {"ablation.csv"});
  for (const auto& s : table.summaries)
    std::printf("%-10s R@1 %.4f +- %.4f (n=%zu)\n", s.mode.c_str(), s.mean,
                s.stdev, s.n);
  return 0;
}

int cmd_gradcheck(const CommonOpts& opts) {
  GradSuiteReport rep = run_gradcheck_suite(
      opts.seed >= 0 ? static_cast<std::uint64_t>(opts.seed) : 0);
  fs::create_directories(opts.out_dir);
  std::string path = (fs::path(opts.out_dir) / "gradcheck.txt").string();
  {
    std::ofstream out(path);
    for (const auto& e : rep.entries) {
      out << e.module << " max_rel_err=" << format_double(e.max_rel_err)
          << " tol=" << format_double(e.tolerance)
          << (e.pass ? " pass" : " FAIL") << "\n";
      std::printf("%-18s %.3e (tol %.0e) %s\n", e.module.c_str(),
                  e.max_rel_err, e.tolerance, e.pass ? "pass" : "FAIL");
    }
  }
  Config cfg = load_effective_config(opts);
  write_manifest(opts.out_dir, "gradcheck", cfg, {"gradcheck.txt"});
  return rep.all_pass() ? 0 : 2;
}

int cmd_spike_stats(const CommonOpts& opts) {
  Config cfg = load_effective_config(opts);
  DatasetConfig dc = dataset_config_from(cfg);
  dc.n_train = 8;
  dc.n_val = 0;
  dc.n_test = 0;
  Dataset ds = generate_dataset(dc);
  ModelConfig mc = model_config_from(cfg);
  mc.d_in = ds.d;
  GshnModel m = make_model(mc, ds.vocab.size(),
                           RngStream(dc.seed, 0x0DE1));
  fs::create_directories(opts.out_dir);
  std::string path = (fs::path(opts.out_dir) / "spike_stats.csv").string();
  std::ofstream out(path);
  out << "scene,nodes,mean_rate,max_count,zero_channels\n";
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    VisualCache vis;
    visual_forward(m, ds.records[i].graph, SnnMode::hard,
                   RngStream(dc.seed, 100 + i), vis);
    double sum = 0.0, mx = 0.0;
    std::size_t zero = 0;
    for (std::size_t k = 0; k < vis.rec.counts.size(); ++k) {
      sum += vis.rec.counts[k];
      mx = std::max(mx, vis.rec.counts[k]);
      if (vis.rec.counts[k] == 0.0) ++zero;
    }
    double rate = sum / (static_cast<double>(vis.rec.counts.size()) *
                         static_cast<double>(m.cfg.T));
    out << i << "," << vis.rec.counts.rows() << "," << format_double(rate)
        << "," << format_double(mx) << "," << zero << "\n";
    std::printf("scene %zu: %zu nodes, mean rate %.3f, max count %.0f\n", i,
                vis.rec.counts.rows(), rate, mx);
  }
  write_manifest(opts.out_dir, "spike-stats", cfg, {"spike_stats.csv"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-spiking hybrid network trainer"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string ckpt, data, split = "test";

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* c = sub->add_option("--config", opts.config_path,
                              "key=value config file");
    if (need_config) c->required();
    sub->add_option("--seed", opts.seed, "seed override");
    sub->add_option("--out", opts.out_dir, "output directory");
  };

  auto* gen = app.add_subcommand("generate-data", "write a synthetic dataset");
  add_common(gen, false);
  auto* tr = app.add_subcommand("train", "pretrain on a dataset");
  add_common(tr, true);
  auto* ev = app.add_subcommand("eval", "retrieval metrics for a checkpoint");
  add_common(ev, false);
  ev->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  ev->add_option("--data", data, "dataset jsonl")->required();
  ev->add_option("--split", split, "dataset split to score");
  auto* ab = app.add_subcommand("ablate", "run the ablation matrix");
  add_common(ab, true);
  auto* gc = app.add_subcommand("gradcheck", "module gradient verification");
  add_common(gc, false);
  auto* ss = app.add_subcommand("spike-stats", "spike activity summary");
  add_common(ss, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate_data(opts);
    if (tr->parsed()) return cmd_train(opts);
    if (ev->parsed()) return cmd_eval(opts, ckpt, data, split);
    if (ab->parsed()) return cmd_ablate(opts);
    if (gc->parsed()) return cmd_gradcheck(opts);
    if (ss->parsed()) return cmd_spike_stats(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
