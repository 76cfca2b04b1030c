#include <doctest.h>

#include <cmath>

#include "gshn/gradcheck.hpp"
#include "gshn/model.hpp"
#include "gshn/synthetic.hpp"

using namespace gshn;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_in = 4;
  cfg.d_hidden = 8;
  cfg.d_mem = 6;
  cfg.gat_layers = 2;
  cfg.T = 3;
  cfg.tf_layers = 1;
  cfg.tf_heads = 2;
  cfg.tf_ff = 8;
  cfg.seq_cap = 24;
  cfg.stl.mask_prob = 0.3;
  return cfg;
}

SceneGraph tiny_graph(std::size_t n, std::size_t d, RngStream rng) {
  SceneGraph g;
  g.X = Tensor({n, d});
  for (std::size_t i = 0; i < g.X.size(); ++i) g.X[i] = rng.next_gaussian();
  g.node_kind.assign(n, NodeKind::thing);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.edges.push_back({i, j});
  return g;
}

struct Fixture {
  Vocabulary vocab = Vocabulary::build({"red", "blue", "circle", "square"});
  SceneGraph g1, g2;
  std::vector<BatchItem> items;

  explicit Fixture(RngStream rng)
      : g1(tiny_graph(2, 4, rng.split(0))), g2(tiny_graph(3, 4, rng.split(1))) {
    items.push_back({&g1, tokenize("red circle", vocab),
                     tokenize("blue square", vocab)});
    items.push_back({&g2, tokenize("blue square", vocab),
                     tokenize("red circle", vocab)});
  }
};

}  // namespace

TEST_CASE("hard-mode step: finite losses, binary spikes") {
  RngStream rng(301, 0);
  Fixture fx(rng.split(0));
  GshnModel m = make_model(tiny_config(), fx.vocab.size(), rng.split(1));
  StepConfig sc;
  sc.mode = SnnMode::hard;
  sc.with_grad = true;
  StepLosses l = model_step(m, fx.vocab, fx.items, rng.split(2), sc);
  CHECK(std::isfinite(l.total));
  CHECK(l.itm > 0.0);
  CHECK(l.mlm >= 0.0);
  CHECK(l.cl > 0.0);
  CHECK(l.mean_firing_rate >= 0.0);
  CHECK(l.mean_firing_rate <= 1.0);

  // same rng -> bit-identical losses (fresh model to reset grads)
  GshnModel m2 = make_model(tiny_config(), fx.vocab.size(), rng.split(1));
  StepLosses l2 = model_step(m2, fx.vocab, fx.items, rng.split(2), sc);
  CHECK(l.total == l2.total);
  CHECK(l.stl == l2.stl);
}

TEST_CASE("full-model gradcheck on the relaxed path") {
  RngStream rng(302, 0);
  Fixture fx(rng.split(0));
  GshnModel m = make_model(tiny_config(), fx.vocab.size(), rng.split(1));
  StepConfig sc;
  sc.mode = SnnMode::relaxed;
  sc.carry = false;  // the stream carry is deliberately detached in backward
  auto loss = [&](bool with_grad) {
    StepConfig c = sc;
    c.with_grad = with_grad;
    return model_step(m, fx.vocab, fx.items, RngStream(77, 3), c).total;
  };
  auto params = all_params(m);
  // denom floor 1e-5: structurally-zero gradients (e.g. attention key bias
  // under softmax shift invariance) otherwise compare roundoff to roundoff.
  auto report = gradcheck(loss, params, 1e-5, RngStream(0, 0), 4, 1e-5);
  CHECK(report.max_rel_err() < 1e-4);
}

TEST_CASE("STL sends no gradient to zeta") {
  RngStream rng(303, 0);
  Fixture fx(rng.split(0));
  ModelConfig cfg = tiny_config();
  cfg.w_itm = cfg.w_mlm = cfg.w_cl = 0.0;  // STL alone
  GshnModel m = make_model(cfg, fx.vocab.size(), rng.split(1));
  StepConfig sc;
  sc.mode = SnnMode::hard;
  model_step(m, fx.vocab, fx.items, rng.split(2), sc);
  for (Parameter* p : zeta_params(m))
    for (std::size_t i = 0; i < p->grad.size(); ++i) CHECK(p->grad[i] == 0.0);
  // but the STL head itself does receive gradient
  double g = 0.0;
  for (std::size_t i = 0; i < m.stl_head.W.grad.size(); ++i)
    g += std::abs(m.stl_head.W.grad[i]);
  CHECK(g > 0.0);
}

TEST_CASE("frozen zeta accumulates nothing under the full objective") {
  RngStream rng(304, 0);
  Fixture fx(rng.split(0));
  GshnModel m = make_model(tiny_config(), fx.vocab.size(), rng.split(1));
  for (Parameter* p : zeta_params(m)) p->frozen = true;
  StepConfig sc;
  sc.mode = SnnMode::hard;
  sc.use_stl = false;
  model_step(m, fx.vocab, fx.items, rng.split(2), sc);
  for (Parameter* p : zeta_params(m))
    for (std::size_t i = 0; i < p->grad.size(); ++i) CHECK(p->grad[i] == 0.0);
  // the GAT upstream still trains
  double g = 0.0;
  for (std::size_t i = 0; i < m.gat[0].W.grad.size(); ++i)
    g += std::abs(m.gat[0].W.grad[i]);
  CHECK(g > 0.0);
}

TEST_CASE("fixed_r=0 metrics match gat_only bit-exactly") {
  RngStream rng(305, 0);
  Fixture fx(rng.split(0));
  ModelConfig a = tiny_config();
  a.fusion_mode = FusionMode::fixed_r;
  a.fixed_r = 0.0;
  ModelConfig b = tiny_config();
  b.fusion_mode = FusionMode::gat_only;
  GshnModel ma = make_model(a, fx.vocab.size(), rng.split(1));
  GshnModel mb = make_model(b, fx.vocab.size(), rng.split(1));
  StepConfig sc;
  sc.mode = SnnMode::hard;
  sc.with_grad = false;
  StepLosses la = model_step(ma, fx.vocab, fx.items, rng.split(2), sc);
  StepLosses lb = model_step(mb, fx.vocab, fx.items, rng.split(2), sc);
  CHECK(la.total == lb.total);
  CHECK(la.itm == lb.itm);
  CHECK(la.cl == lb.cl);
}

TEST_CASE("membrane carry changes downstream items but stays deterministic") {
  RngStream rng(306, 0);
  Fixture fx(rng.split(0));
  GshnModel m = make_model(tiny_config(), fx.vocab.size(), rng.split(1));
  // single item -> no carry; same item first vs second in a batch
  VisualCache c_alone, c_first, c_second;
  visual_forward(m, fx.g2, SnnMode::relaxed, RngStream(1, 1), c_alone);
  visual_forward(m, fx.g1, SnnMode::relaxed, RngStream(1, 1), c_first);
  auto carry = carry_channels(c_first);
  visual_forward(m, fx.g2, SnnMode::relaxed, RngStream(1, 1), c_second,
                 &carry);
  bool same = true;
  for (std::size_t i = 0; i < c_alone.rec.counts.size(); ++i)
    if (c_alone.rec.counts[i] != c_second.rec.counts[i]) same = false;
  CHECK(!same);
  // batch start == v_rest everywhere: alone vs first-in-batch identical
  for (std::size_t i = 0; i < c_first.rec.counts.size(); ++i)
    CHECK(c_first.rec.counts[i] ==
          doctest::Approx(c_first.rec.counts[i]));
}

TEST_CASE("model on generated scenes end to end") {
  DatasetConfig dcfg;
  dcfg.n_train = 6;
  dcfg.n_val = 0;
  dcfg.n_test = 0;
  dcfg.seed = 9;
  Dataset ds = generate_dataset(dcfg);
  ModelConfig cfg;  // desk defaults, small transformer for speed
  cfg.tf_layers = 1;
  GshnModel m = make_model(cfg, ds.vocab.size(), RngStream(307, 0));
  std::vector<BatchItem> items;
  for (std::size_t i = 0; i < 4; ++i)
    items.push_back({&ds.records[i].graph,
                     tokenize(ds.records[i].caption, ds.vocab),
                     tokenize(ds.records[i + 1].caption, ds.vocab)});
  StepConfig sc;
  sc.mode = SnnMode::hard;
  StepLosses l = model_step(m, ds.vocab, items, RngStream(308, 0), sc);
  CHECK(std::isfinite(l.total));
  CHECK(l.total > 0.0);
}
