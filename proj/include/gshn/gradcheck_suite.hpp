#pragma once

#include <string>
#include <vector>

#include "gshn/gradcheck.hpp"
#include "gshn/model.hpp"

namespace gshn {

struct GradSuiteEntry {
  std::string module;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradSuiteReport {
  std::vector<GradSuiteEntry> entries;
  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
};

namespace detail {

inline SceneGraph gradcheck_graph(std::size_t n, std::size_t d,
                                  RngStream rng) {
  SceneGraph g;
  g.X = Tensor({n, d});
  for (std::size_t i = 0; i < g.X.size(); ++i) g.X[i] = rng.next_gaussian();
  g.node_kind.assign(n, NodeKind::thing);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.edges.push_back({i, j});
  return g;
}

inline GradSuiteEntry suite_entry(const std::string& module,
                                  const GradCheckReport& rep, double tol) {
  return {module, rep.max_rel_err(), tol, rep.max_rel_err() < tol};
}

}  // namespace detail

// Module-by-module gradient verification on <= 3-node scenes, T <= 4.
// Smooth paths must pass 1e-6; spike/surrogate paths 1e-4.
inline GradSuiteReport run_gradcheck_suite(std::uint64_t seed) {
  GradSuiteReport report;
  RngStream root(seed, 0x6C);

  {  // GAT stack (smooth)
    SceneGraph g = detail::gradcheck_graph(3, 4, root.split(0));
    std::vector<GatLayerParams> layers;
    layers.push_back(make_gat_layer("g0", 4, 5, root.split(1)));
    layers.push_back(make_gat_layer("g1", 5, 5, root.split(2)));
    auto loss = [&](bool with_grad) {
      GatCache cache;
      Tensor f = gat_forward(g, layers, &cache);
      double l = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) l += f[i] * f[i];
      if (with_grad) {
        Tensor d(f.shape());
        for (std::size_t i = 0; i < f.size(); ++i) d[i] = 2.0 * f[i];
        gat_backward(g, layers, cache, d);
      }
      return l;
    };
    std::vector<Parameter*> ps;
    for (auto& l : layers) {
      ps.push_back(&l.W);
      ps.push_back(&l.a);
    }
    report.entries.push_back(detail::suite_entry(
        "gat", gradcheck(loss, ps, 1e-5, root.split(3)), 1e-6));
  }

  {  // SNN zeta via the relaxed surrogate path
    SnnParams snn = make_snn("snn", 4, 5, root.split(10));
    Tensor rates({3, 4});
    RngStream rr = root.split(11);
    for (std::size_t i = 0; i < rates.size(); ++i)
      rates[i] = 0.2 + 0.6 * rr.next_double();
    auto loss = [&](bool with_grad) {
      SnnCache cache;
      SpikeRecord rec = run_snn(rates, snn, &cache, nullptr, nullptr, 4);
      double l = 0.0;
      for (std::size_t i = 0; i < rec.counts.size(); ++i)
        l += rec.counts[i] * rec.counts[i];
      if (with_grad) {
        Tensor d(rec.counts.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = 2.0 * rec.counts[i];
        snn_backward(d, snn, cache);
      }
      return l;
    };
    std::vector<Parameter*> ps = {&snn.W, &snn.tdbn.gamma, &snn.tdbn.beta};
    report.entries.push_back(detail::suite_entry(
        "snn_zeta", gradcheck(loss, ps, 1e-5, root.split(12)), 1e-4));
  }

  {  // SMU memory (smooth; counts kept off the rowsum kink)
    SemanticMemory mem = smu_init(4, 6, root.split(20));
    Tensor counts = Tensor::matrix(
        {{2, 0, 1, 0, 3, 0}, {0, 4, 0, 0, 0, 2}, {1, 1, 1, 1, 1, 1}});
    auto loss = [&](bool with_grad) {
      SmuCache cache;
      Tensor e = smu_readout(counts, mem, &cache);
      double l = 0.0;
      for (std::size_t i = 0; i < e.size(); ++i) l += e[i] * e[i];
      if (with_grad) {
        Tensor d(e.shape());
        for (std::size_t i = 0; i < e.size(); ++i) d[i] = 2.0 * e[i];
        smu_backward(d, mem, cache);
      }
      return l;
    };
    report.entries.push_back(detail::suite_entry(
        "smu", gradcheck(loss, {&mem.M}, 1e-5, root.split(21)), 1e-6));
  }

  {  // fusion gate (smooth)
    FusionParams fusion = make_fusion("f", 5, root.split(30));
    RngStream fr = root.split(31);
    Tensor f_gat({3, 5}), e_snn({3, 5});
    for (std::size_t i = 0; i < f_gat.size(); ++i) {
      f_gat[i] = fr.next_gaussian();
      e_snn[i] = fr.next_gaussian();
    }
    auto loss = [&](bool with_grad) {
      FusionCache cache;
      Tensor r = squeeze_ratio(f_gat, fusion, &cache);
      Tensor v = fuse(f_gat, e_snn, r, fusion.mode);
      double l = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) l += v[i] * v[i];
      if (with_grad) {
        Tensor d(v.shape());
        for (std::size_t i = 0; i < v.size(); ++i) d[i] = 2.0 * v[i];
        fusion_backward(d, f_gat, e_snn, fusion, cache);
      }
      return l;
    };
    report.entries.push_back(detail::suite_entry(
        "fusion", gradcheck(loss, {&fusion.W_fc}, 1e-5, root.split(32)),
        1e-6));
  }

  {  // transformer + ITM/MLM heads through the joint encoder (smooth)
    Vocabulary vocab = Vocabulary::build({"a", "b", "c"});
    JointEncoderParams enc = make_joint_encoder("e", vocab.size(), 8, 2, 2,
                                                16, 24, root.split(40));
    ItmHead itm = make_itm_head("itm", 8, root.split(41));
    MlmHead mlm = make_mlm_head("mlm", 8, vocab.size(), root.split(42));
    Tensor vis({2, 8});
    RngStream vr = root.split(43);
    for (std::size_t i = 0; i < vis.size(); ++i) vis[i] = vr.next_gaussian();
    std::vector<int> ids = tokenize("a b c", vocab);
    auto loss = [&](bool with_grad) {
      MlmPlan plan = mlm_plan(ids, vocab, RngStream(3, 3), 0.9);
      JointCache cache;
      Tensor states = joint_encode(vis, plan.input_ids, enc, cache);
      std::size_t n = cache.n_vis, d = 8;
      Tensor cls({d});
      for (std::size_t k = 0; k < d; ++k) cls[k] = states.at(n, k);
      auto ir = itm_loss(cls, true, itm);
      Tensor text({ids.size(), d});
      for (std::size_t j = 0; j < ids.size(); ++j)
        for (std::size_t k = 0; k < d; ++k) text.at(j, k) = states.at(n + j, k);
      MlmCache mc;
      double l = ir.loss + mlm_loss(text, plan, mlm, &mc);
      if (with_grad) {
        Tensor d_states(states.shape());
        Tensor d_cls = itm_backward(cls, true, itm, ir.score);
        for (std::size_t k = 0; k < d; ++k) d_states.at(n, k) += d_cls[k];
        Tensor d_text = mlm_backward(text, plan, mlm, mc);
        for (std::size_t j = 0; j < ids.size(); ++j)
          for (std::size_t k = 0; k < d; ++k)
            d_states.at(n + j, k) += d_text.at(j, k);
        joint_encode_backward(d_states, enc, cache);
      }
      return l;
    };
    std::vector<Parameter*> ps;
    collect_joint_params(enc, ps);
    ps.push_back(&itm.w);
    ps.push_back(&itm.b);
    ps.push_back(&mlm.W);
    ps.push_back(&mlm.b);
    report.entries.push_back(detail::suite_entry(
        "transformer_heads",
        gradcheck(loss, ps, 1e-5, root.split(44), 8, 1e-6), 1e-6));
  }

  {  // STL head + focal loss (smooth in the head/pooled inputs)
    StlHead head = make_stl_head("stl", 4, 6, root.split(50));
    Parameter pooled = make_param("pooled", {4}, root.split(51), 1.0);
    SpikeRecord rec;
    rec.T = 4;
    rec.counts = Tensor::matrix({{1, 0, 2, 0, 3, 1}, {0, 0, 1, 4, 0, 2}});
    StlConfig cfg;
    cfg.mask_prob = 0.4;
    auto loss = [&](bool with_grad) {
      StlCache cache;
      auto res = stl_step(pooled.value, rec, cfg, RngStream(9, 9), head,
                          &cache);
      if (with_grad) {
        Tensor d = stl_backward(pooled.value, cfg, head, cache);
        pooled.accumulate(d);
      }
      return res.loss;
    };
    report.entries.push_back(detail::suite_entry(
        "stl",
        gradcheck(loss, {&pooled, &head.W, &head.b}, 1e-5, root.split(52)),
        1e-6));
  }

  return report;
}

}  // namespace gshn
