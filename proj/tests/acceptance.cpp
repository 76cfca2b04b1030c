// Acceptance harness: one pass/fail line per criterion, pinned tolerances.
// Exit code = number of failed criteria. Run with --quick to skip the
// training-scale criteria (sanity run, ablations, trained retrieval).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "gshn/ablate.hpp"
#include "gshn/batching.hpp"
#include "gshn/eval.hpp"
#include "gshn/gradcheck_suite.hpp"
#include "gshn/model.hpp"
#include "gshn/synthetic.hpp"
#include "gshn/train.hpp"

using namespace gshn;

namespace {

int failures = 0;

void criterion(const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %s — %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

SceneGraph random_graph(std::size_t n, std::size_t d, RngStream rng) {
  SceneGraph g;
  g.X = Tensor({n, d});
  for (std::size_t i = 0; i < g.X.size(); ++i) g.X[i] = rng.next_gaussian();
  g.node_kind.assign(n, NodeKind::thing);
  for (std::size_t i = 0; i < n; ++i) {
    g.edges.push_back({i, i});
    g.edges.push_back({i, (i + 1) % n});
    g.edges.push_back({i, (i + 2) % n});
  }
  return g;
}

// --- criterion 1: gradient integrity --------------------------------------

void check_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  GradSuiteReport rep = run_gradcheck_suite(7);
  double secs = elapsed_s(t0);
  std::string detail;
  for (const auto& e : rep.entries)
    detail += e.module + " " + format_double(e.max_rel_err) + " ";
  detail += "in " + std::to_string(secs) + "s";
  criterion("gradient integrity (<1e-6 smooth, <1e-4 surrogate, <60s)",
            rep.all_pass() && secs < 60.0, detail);
}

// --- criterion 2: attention & normalization -------------------------------

void check_normalization() {
  RngStream rng(11, 0);
  double worst_softmax = 0.0;

  SceneGraph g = random_graph(6, 16, rng.split(0));
  std::vector<GatLayerParams> layers;
  layers.push_back(make_gat_layer("g0", 16, 8, rng.split(1)));
  layers.push_back(make_gat_layer("g1", 8, 8, rng.split(2)));
  GatCache gc;
  gat_forward(g, layers, &gc);
  for (const auto& lc : gc.layers) {
    std::vector<double> sums(6, 0.0);
    for (std::size_t e = 0; e < g.edges.size(); ++e)
      sums[g.edges[e].first] += lc.alpha[e];
    for (double s : sums) worst_softmax = std::max(worst_softmax, std::abs(s - 1.0));
  }

  Vocabulary v = caption_vocabulary();
  JointEncoderParams enc =
      make_joint_encoder("e", v.size(), 16, 2, 2, 32, 48, rng.split(3));
  Tensor vis({3, 16});
  for (std::size_t i = 0; i < vis.size(); ++i) vis[i] = rng.split(4).next_gaussian();
  std::vector<int> ids = tokenize("a small red circle", v);
  ids.push_back(Vocabulary::kPad);
  JointCache jc;
  joint_encode(vis, ids, enc, jc);
  for (const auto& layer : jc.tf.layers)
    for (const auto& p : layer.mha.probs)
      for (std::size_t q = 0; q < p.rows(); ++q) {
        if (!jc.valid[q]) continue;
        double s = 0.0;
        for (std::size_t k = 0; k < p.cols(); ++k) s += p.at(q, k);
        worst_softmax = std::max(worst_softmax, std::abs(s - 1.0));
      }

  // tdBN: variance of the input must dwarf eps=1e-5 for var within 1e-6
  TdbnParams bn = make_tdbn("bn", 8);
  Tensor pre({6, 50, 8});
  RngStream br = rng.split(5);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = 10.0 * br.next_gaussian();
  Tensor post = tdbn_normalize(pre, bn, 1.0);
  double worst_mean = 0.0, worst_var = 0.0;
  for (std::size_t c = 0; c < 8; ++c) {
    double m = 0.0, var = 0.0, cnt = 6.0 * 50.0;
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t i = 0; i < 50; ++i) m += post.at3(t, i, c);
    m /= cnt;
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t i = 0; i < 50; ++i) {
        double d = post.at3(t, i, c) - m;
        var += d * d;
      }
    var /= cnt;
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_var = std::max(worst_var, std::abs(var - 1.0));
  }

  criterion("attention & normalization (softmax 1e-10, tdBN mean 1e-10 var 1e-6)",
            worst_softmax < 1e-10 && worst_mean < 1e-10 && worst_var < 1e-6,
            "softmax dev " + format_double(worst_softmax) + ", tdbn mean " +
                format_double(worst_mean) + ", var dev " +
                format_double(worst_var));
}

// --- criterion 3: spike correctness ---------------------------------------

void check_spikes() {
  bool ok = true;
  std::string detail;

  ModelConfig mc;
  mc.d_in = 16;
  GshnModel m = make_model(mc, caption_vocabulary().size(), RngStream(5, 1));
  SceneGraph g = random_graph(5, 16, RngStream(5, 2));
  VisualCache vis;
  visual_forward(m, g, SnnMode::hard, RngStream(5, 3), vis);
  for (std::size_t i = 0; i < vis.rec.per_step->size(); ++i) {
    double s = (*vis.rec.per_step)[i];
    if (s != 0.0 && s != 1.0) ok = false;
  }
  for (std::size_t i = 0; i < vis.rec.counts.size(); ++i) {
    double c = vis.rec.counts[i];
    if (c != std::floor(c) || c < 0.0 || c > static_cast<double>(mc.T)) ok = false;
  }
  if (!ok) detail += "binarity/count violation; ";

  // constant drive 0.6, decay 0.5, v_th 1: membrane 0.6, 0.9, 1.05 -> fire
  LifConfig lif;
  Tensor u({1}), in({1});
  in[0] = 0.6;
  bool period_ok = true;
  for (std::size_t t = 1; t <= 30; ++t) {
    auto [spk, u_next] = lif_step(u, in, lif);
    u = std::move(u_next);
    bool expect = t % 3 == 0;
    if ((spk[0] == 1.0) != expect) period_ok = false;
  }
  if (!period_ok) detail += "period-3 oracle mismatch; ";

  std::size_t T = 10000;
  double worst_z = 0.0;
  for (double f : {-1.0, 0.0, 1.5}) {
    Tensor fg = Tensor::matrix({{f}});
    Tensor draws = encode_bernoulli(fg, T, RngStream(77, static_cast<std::uint64_t>(f * 8 + 100)));
    double p = sigmoid(f), fired = 0.0;
    for (std::size_t t = 0; t < T; ++t) fired += draws.at3(t, 0, 0);
    double z = std::abs(fired / T - p) / std::sqrt(p * (1 - p) / T);
    worst_z = std::max(worst_z, z);
  }
  if (worst_z >= 3.0) detail += "bernoulli rate off; ";

  criterion("spike correctness (binarity, counts<=T, period-3, Bernoulli 3sigma)",
            ok && period_ok && worst_z < 3.0,
            detail.empty() ? "worst z " + format_double(worst_z) : detail);
}

// --- criterion 4: SMU semantics -------------------------------------------

void check_smu() {
  SemanticMemory mem = smu_init(6, 8, RngStream(21, 0));
  bool ok = true;

  Tensor counts({3, 8});
  counts.fill(0.0);
  counts.at(0, 5) = 3.0;  // one-hot row, column 5
  // row 1 all zero; row 2 mixed
  counts.at(2, 1) = 2.0;
  counts.at(2, 4) = 2.0;
  Tensor e = smu_readout(counts, mem);
  for (std::size_t k = 0; k < 6; ++k) {
    if (e.at(0, k) != mem.M.value.at(k, 5)) ok = false;
    if (e.at(1, k) != 0.0) ok = false;
  }

  Tensor doubled = counts;
  for (std::size_t i = 0; i < doubled.size(); ++i) doubled[i] *= 2.0;
  Tensor e2 = smu_readout(doubled, mem);
  for (std::size_t i = 0; i < e.size(); ++i)
    if (e[i] != e2[i]) ok = false;

  criterion("SMU semantics (one-hot column, zero rows, doubling bit-exact)",
            ok, ok ? "exact" : "mismatch");
}

// --- criterion 5: focal/BCE reduction -------------------------------------

void check_focal_bce() {
  RngStream rng(31, 0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double logit = 16.0 * (rng.next_double() - 0.5);
    double y = rng.next_double() < 0.5 ? 0.0 : 1.0;
    double focal = focal_loss({logit}, {y}, 0.0, 1.0);
    double p = sigmoid(logit);
    double bce = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    worst = std::max(worst, std::abs(focal - bce));
  }
  criterion("focal(gamma=0,alpha=1) == BCE within 1e-9 over 1e4 draws",
            worst < 1e-9, "worst |diff| " + format_double(worst));
}

// --- criterion 6: fusion identities ---------------------------------------

void check_fusion_identities() {
  ModelConfig base;
  base.d_in = 16;
  SceneGraph g = random_graph(5, 16, RngStream(41, 0));

  ModelConfig ca = base, cb = base;
  ca.fusion_mode = FusionMode::fixed_r;
  ca.fixed_r = 0.0;
  cb.fusion_mode = FusionMode::gat_only;
  GshnModel ma = make_model(ca, caption_vocabulary().size(), RngStream(41, 1));
  GshnModel mb = make_model(cb, caption_vocabulary().size(), RngStream(41, 1));
  VisualCache va, vb;
  Tensor out_a = visual_forward(ma, g, SnnMode::relaxed, RngStream(0, 0), va);
  Tensor out_b = visual_forward(mb, g, SnnMode::relaxed, RngStream(0, 0), vb);
  bool ok = out_a.size() == out_b.size();
  for (std::size_t i = 0; ok && i < out_a.size(); ++i)
    if (out_a[i] != out_b[i]) ok = false;

  // E_SNN = 0 leaves V' = F_GAT bit-exactly under the trainable gate
  FusionParams fp = make_fusion("f", 8, RngStream(41, 2));
  Tensor f({4, 8}), zero({4, 8});
  RngStream fr(41, 3);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = fr.next_gaussian();
  zero.fill(0.0);
  Tensor r = squeeze_ratio(f, fp);
  Tensor v = fuse(f, zero, r, FusionMode::trainable_r);
  for (std::size_t i = 0; i < f.size(); ++i)
    if (v[i] != f[i]) ok = false;

  criterion("fusion identities (r=0 == gat_only; E=0 -> V'=F bit-exact)", ok,
            ok ? "bit-identical" : "mismatch");
}

// --- criterion 9: determinism ---------------------------------------------

void check_determinism() {
  DatasetConfig dc;
  dc.n_train = 64;
  dc.n_val = 32;
  dc.n_test = 16;
  dc.seed = 3;
  Dataset ds = generate_dataset(dc);
  ModelConfig mc;
  mc.d_in = ds.d;
  TrainConfig tc;
  tc.epochs = 3;
  tc.freeze_epochs = 1;
  tc.batch_size = 8;
  tc.seed = 9;

  auto run_csv = [&] {
    GshnModel m = make_model(mc, ds.vocab.size(), RngStream(tc.seed, 0x0DE1));
    TrainResult res = train(m, ds, tc);
    std::string csv = metrics_csv_header();
    for (const auto& r : res.metrics) csv += metrics_csv_row(r);
    return csv;
  };
  std::string a = run_csv(), b = run_csv();
  criterion("determinism (same seed+config -> bit-identical metrics CSV)",
            a == b, a == b ? "identical" : "CSV rows differ");
}

// --- criteria 7/8/10: training-scale --------------------------------------

void check_training_scale() {
  DatasetConfig dc;
  dc.seed = 1;  // 2000/200/200 desk dataset
  Dataset ds = generate_dataset(dc);
  ModelConfig mc;
  mc.d_in = ds.d;
  TrainConfig tc;
  tc.seed = 1;

  GshnModel m = make_model(mc, ds.vocab.size(), RngStream(tc.seed, 0x0DE1));
  TrainResult res = train(m, ds, tc);
  const auto& first = res.metrics.front();
  const auto& last = res.metrics.back();
  double stl_first = 0.0;
  for (const auto& r : res.metrics)
    if (r.stl > 0.0) {
      stl_first = r.stl;
      break;
    }
  bool halved = last.total < 0.5 * first.total;
  bool stl_down = stl_first > 0.0 && last.stl <= 0.8 * stl_first;
  bool in_time = res.seconds < 600.0;
  criterion("training sanity (total < 50% of epoch 1, STL -20%, <10 min)",
            halved && stl_down && in_time,
            "total " + format_double(first.total) + " -> " +
                format_double(last.total) + ", stl " + format_double(stl_first) +
                " -> " + format_double(last.stl) + ", " +
                format_double(res.seconds) + "s");

  // retrieval: chance baseline on untrained models, then the trained model
  auto test_items = ds.split("test");
  double n_test = static_cast<double>(test_items.size());
  double chance = 1.0 / n_test;
  double mean_r1 = 0.0;
  std::size_t seeds = 10;
  for (std::size_t s = 0; s < seeds; ++s) {
    GshnModel u = make_model(mc, ds.vocab.size(), RngStream(100 + s, 0x0DE1));
    RetrievalMetrics r = evaluate_retrieval(u, test_items, ds.vocab);
    mean_r1 += 0.5 * (r.r1_i2t + r.r1_t2i);
  }
  mean_r1 /= static_cast<double>(seeds);
  double sigma = std::sqrt(chance * (1.0 - chance) /
                           (n_test * 2.0 * static_cast<double>(seeds)));
  bool chance_ok = std::abs(mean_r1 - chance) < 3.0 * sigma;

  RetrievalMetrics tr = evaluate_retrieval(m, test_items, ds.vocab);
  double trained_r1 = 0.5 * (tr.r1_i2t + tr.r1_t2i);
  bool trained_ok = trained_r1 >= 5.0 * chance;
  criterion("retrieval (untrained R@1 within 3sigma of chance; trained >= 5x)",
            chance_ok && trained_ok,
            "untrained " + format_double(mean_r1) + " vs chance " +
                format_double(chance) + " (3sigma " + format_double(3 * sigma) +
                "), trained " + format_double(trained_r1));
}

void check_ablations() {
  DatasetConfig dc;
  dc.n_train = 400;
  dc.n_val = 100;
  dc.n_test = 200;
  dc.seed = 1;
  Dataset ds = generate_dataset(dc);
  ModelConfig mc;
  mc.d_in = ds.d;
  TrainConfig tc;
  tc.epochs = 8;
  tc.freeze_epochs = 2;

  std::vector<std::string> modes = {"trainable", "fixed1",  "gat_only",
                                    "snn_only",  "smu_off", "T20"};
  AblationTable table = run_ablation(ds, mc, tc, modes, {1, 2, 3, 4, 5});
  double tr = summary_mean(table, "trainable");
  double f1 = summary_mean(table, "fixed1");
  double go = summary_mean(table, "gat_only");
  double so = summary_mean(table, "snn_only");
  double sm = summary_mean(table, "smu_off");
  double t20 = summary_mean(table, "T20");

  bool order = tr >= f1 && f1 >= go && go >= so;  // Table 5 direction
  bool with_r = tr >= go;                         // Table 2 direction
  bool smu = tr >= sm;                            // Fig 4 direction
  bool window = std::abs(tr - t20) < 0.03;        // Fig 3: close at T=10 vs 20
  std::string detail = "trainable " + format_double(tr) + ", fixed1 " +
                       format_double(f1) + ", gat_only " + format_double(go) +
                       ", snn_only " + format_double(so) + ", smu_off " +
                       format_double(sm) + ", T20 " + format_double(t20);
  criterion("directional ablations (r-modes, with-r, SMU, |T10-T20| < 3pts)",
            order && with_r && smu && window, detail);
}

}  // namespace

int main(int argc, char** argv) {
  bool quick = false;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--quick") == 0) quick = true;

  check_gradients();
  check_normalization();
  check_spikes();
  check_smu();
  check_focal_bce();
  check_fusion_identities();
  check_determinism();
  if (quick) {
    std::printf("[SKIP] training sanity, ablations, retrieval (--quick)\n");
  } else {
    check_training_scale();
    check_ablations();
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
