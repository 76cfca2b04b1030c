#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "gshn/rng.hpp"
#include "gshn/scene_graph.hpp"
#include "gshn/vocab.hpp"

namespace gshn {

inline const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> v = {"circle", "square", "triangle",
                                             "star"};
  return v;
}
inline const std::vector<std::string>& color_names() {
  static const std::vector<std::string> v = {"red", "blue", "green", "yellow",
                                             "black"};
  return v;
}
inline const std::vector<std::string>& size_names() {
  static const std::vector<std::string> v = {"small", "large"};
  return v;
}
inline const std::vector<std::string>& background_names() {
  static const std::vector<std::string> v = {"sky", "grass", "water"};
  return v;
}

struct SceneObject {
  int shape = 0;
  int color = 0;
  int size = 0;
  double x = 0.0;
  double y = 0.0;
};

struct SceneSpec {
  std::vector<SceneObject> objects;
  int background = 0;
};

constexpr double kMinSeparation = 0.05;
constexpr std::size_t kMinObjects = 2;
constexpr std::size_t kMaxObjects = 8;

inline SceneSpec generate_scene(RngStream rng) {
  for (;;) {
    SceneSpec spec;
    spec.background = static_cast<int>(rng.next_below(3));
    std::size_t n = kMinObjects + rng.next_below(kMaxObjects - kMinObjects + 1);
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      SceneObject obj;
      obj.shape = static_cast<int>(rng.next_below(shape_names().size()));
      obj.color = static_cast<int>(rng.next_below(color_names().size()));
      obj.size = static_cast<int>(rng.next_below(size_names().size()));
      bool placed = false;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        obj.x = rng.next_double();
        obj.y = rng.next_double();
        bool clear = true;
        for (const auto& o : spec.objects) {
          double dx = o.x - obj.x, dy = o.y - obj.y;
          if (std::sqrt(dx * dx + dy * dy) < kMinSeparation) {
            clear = false;
            break;
          }
        }
        if (clear) {
          placed = true;
          break;
        }
      }
      if (!placed) ok = false;
      spec.objects.push_back(obj);
    }
    if (ok) return spec;
  }
}

// Fixed random attribute vectors shared by a whole dataset. Layout of a thing
// feature: [shape 6 | color 5 | size 3 | x y | zero tail]; the stuff node gets
// a full-width vector per background type.
struct Codebook {
  std::size_t d = 16;
  Tensor shape;  // 4 x 6
  Tensor color;  // 5 x 5
  Tensor size;   // 2 x 3
  Tensor stuff;  // 3 x d

  static constexpr std::size_t kShapeDim = 6;
  static constexpr std::size_t kColorDim = 5;
  static constexpr std::size_t kSizeDim = 3;
};

inline Codebook make_codebook(std::size_t d, RngStream rng) {
  if (d < 16) throw std::invalid_argument("make_codebook: d must be >= 16");
  Codebook cb;
  cb.d = d;
  double sd = 1.0 / std::sqrt(static_cast<double>(d));
  auto draw = [&](std::size_t r, std::size_t c, std::uint64_t id) {
    Tensor t({r, c});
    RngStream s = rng.split(id);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = sd * s.next_gaussian();
    return t;
  };
  cb.shape = draw(shape_names().size(), Codebook::kShapeDim, 0);
  cb.color = draw(color_names().size(), Codebook::kColorDim, 1);
  cb.size = draw(size_names().size(), Codebook::kSizeDim, 2);
  cb.stuff = draw(background_names().size(), d, 3);
  return cb;
}

// Thing nodes first (object order), one stuff node last. Edges: symmetrized
// 3-NN over object positions, every thing -> stuff, self-loops.
inline SceneGraph render_features(const SceneSpec& spec, const Codebook& cb,
                                  double noise_sigma, RngStream rng) {
  std::size_t n = spec.objects.size(), d = cb.d;
  SceneGraph g;
  g.X = Tensor({n + 1, d});
  g.node_kind.assign(n + 1, NodeKind::thing);
  g.node_kind[n] = NodeKind::stuff;
  for (std::size_t i = 0; i < n; ++i) {
    const SceneObject& o = spec.objects[i];
    std::size_t off = 0;
    for (std::size_t k = 0; k < Codebook::kShapeDim; ++k)
      g.X.at(i, off + k) = cb.shape.at(o.shape, k);
    off += Codebook::kShapeDim;
    for (std::size_t k = 0; k < Codebook::kColorDim; ++k)
      g.X.at(i, off + k) = cb.color.at(o.color, k);
    off += Codebook::kColorDim;
    for (std::size_t k = 0; k < Codebook::kSizeDim; ++k)
      g.X.at(i, off + k) = cb.size.at(o.size, k);
    off += Codebook::kSizeDim;
    g.X.at(i, off) = o.x;
    g.X.at(i, off + 1) = o.y;
  }
  for (std::size_t k = 0; k < d; ++k)
    g.X.at(n, k) = cb.stuff.at(spec.background, k);
  if (noise_sigma > 0.0)
    for (std::size_t i = 0; i < g.X.size(); ++i)
      g.X[i] += noise_sigma * rng.next_gaussian();

  std::set<std::pair<std::size_t, std::size_t>> edges;
  std::size_t k_nn = std::min<std::size_t>(3, n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> by_dist;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double dx = spec.objects[i].x - spec.objects[j].x;
      double dy = spec.objects[i].y - spec.objects[j].y;
      by_dist.push_back({dx * dx + dy * dy, j});
    }
    std::sort(by_dist.begin(), by_dist.end());
    for (std::size_t t = 0; t < k_nn; ++t) {
      std::size_t j = by_dist[t].second;
      edges.insert({i, j});
      edges.insert({j, i});
    }
    edges.insert({i, n});  // thing attends to stuff
  }
  for (std::size_t i = 0; i <= n; ++i) edges.insert({i, i});
  g.edges.assign(edges.begin(), edges.end());
  g.validate();
  return g;
}

// Relation from A to B along the dominant axis; y grows upward.
inline std::string relation_word(const SceneObject& a, const SceneObject& b) {
  double dx = b.x - a.x, dy = b.y - a.y;
  if (std::abs(dx) >= std::abs(dy)) return dx > 0.0 ? "left of" : "right of";
  return dy > 0.0 ? "below" : "above";
}

inline std::string describe(const SceneObject& o) {
  return "a " + size_names()[o.size] + " " + color_names()[o.color] + " " +
         shape_names()[o.shape];
}

// "a {size} {color} {shape} {relation} a {size} {color} {shape}" over a
// sampled ordered pair; corrupt=true changes exactly one word to a wrong value.
inline std::string caption_scene(const SceneSpec& spec, RngStream rng,
                                 bool corrupt = false) {
  std::size_t n = spec.objects.size();
  std::size_t i = rng.next_below(n);
  std::size_t j = rng.next_below(n - 1);
  if (j >= i) ++j;
  SceneObject a = spec.objects[i], b = spec.objects[j];
  std::string rel = relation_word(a, b);
  if (corrupt) {
    // Slot 0-2: attribute of A; 3-5: of B; 6: flip the relation direction.
    std::size_t slot = rng.next_below(7);
    auto bump = [&](int cur, std::size_t count) {
      return static_cast<int>((cur + 1 + rng.next_below(count - 1)) % count);
    };
    SceneObject* t = slot < 3 ? &a : &b;
    switch (slot % 3) {
      case 0:
        if (slot == 6) {
          if (rel == "left of") rel = "right of";
          else if (rel == "right of") rel = "left of";
          else if (rel == "above") rel = "below";
          else rel = "above";
        } else {
          t->size = bump(t->size, size_names().size());
        }
        break;
      case 1:
        t->color = bump(t->color, color_names().size());
        break;
      case 2:
        t->shape = bump(t->shape, shape_names().size());
        break;
    }
  }
  return describe(a) + " " + rel + " " + describe(b);
}

// Closed caption vocabulary; every clean or corrupted caption tokenizes
// without UNK.
inline Vocabulary caption_vocabulary() {
  std::vector<std::string> words = {"a", "of", "left", "right", "above",
                                    "below"};
  for (const auto& w : shape_names()) words.push_back(w);
  for (const auto& w : color_names()) words.push_back(w);
  for (const auto& w : size_names()) words.push_back(w);
  return Vocabulary::build(words);
}

// ---- dataset file --------------------------------------------------------

struct SceneRecord {
  std::size_t id = 0;
  SceneGraph graph;
  std::string caption;
  std::string split;  // train | val | test
};

struct Dataset {
  std::size_t d = 16;
  Codebook codebook;
  Vocabulary vocab;
  std::vector<SceneRecord> records;

  std::vector<const SceneRecord*> split(const std::string& name) const {
    std::vector<const SceneRecord*> out;
    for (const auto& r : records)
      if (r.split == name) out.push_back(&r);
    return out;
  }
};

namespace detail {

inline nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t k = 0; k < t.cols(); ++k) row.push_back(t.at(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Tensor tensor_from_json(const nlohmann::json& rows) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows[0].size() : 0;
  Tensor t({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    if (rows[i].size() != c)
      throw std::runtime_error("dataset: ragged feature rows");
    for (std::size_t k = 0; k < c; ++k) t.at(i, k) = rows[i][k].get<double>();
  }
  return t;
}

}  // namespace detail

constexpr int kDatasetVersion = 1;

inline void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset: cannot write " + path);
  nlohmann::json header = {
      {"version", kDatasetVersion},
      {"d", ds.d},
      {"codebook",
       {{"shape", detail::tensor_to_json(ds.codebook.shape)},
        {"color", detail::tensor_to_json(ds.codebook.color)},
        {"size", detail::tensor_to_json(ds.codebook.size)},
        {"stuff", detail::tensor_to_json(ds.codebook.stuff)}}},
      {"vocab", ds.vocab.tokens}};
  out << header.dump() << "\n";
  for (const auto& r : ds.records) {
    nlohmann::json kinds = nlohmann::json::array();
    for (auto k : r.graph.node_kind)
      kinds.push_back(k == NodeKind::thing ? "thing" : "stuff");
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [i, j] : r.graph.edges)
      edges.push_back(nlohmann::json::array({i, j}));
    nlohmann::json rec = {{"id", r.id},
                          {"nodes", detail::tensor_to_json(r.graph.X)},
                          {"node_kind", std::move(kinds)},
                          {"edges", std::move(edges)},
                          {"caption", r.caption},
                          {"split", r.split}};
    out << rec.dump() << "\n";
  }
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot read " + path);
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_dataset: parse error at line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (j.at("version").get<int>() != kDatasetVersion)
          throw std::runtime_error("unsupported dataset version");
        ds.d = j.at("d").get<std::size_t>();
        const auto& cb = j.at("codebook");
        ds.codebook.d = ds.d;
        ds.codebook.shape = detail::tensor_from_json(cb.at("shape"));
        ds.codebook.color = detail::tensor_from_json(cb.at("color"));
        ds.codebook.size = detail::tensor_from_json(cb.at("size"));
        ds.codebook.stuff = detail::tensor_from_json(cb.at("stuff"));
        ds.vocab = Vocabulary::from_tokens(
            j.at("vocab").get<std::vector<std::string>>());
        have_header = true;
        continue;
      }
      SceneRecord r;
      r.id = j.at("id").get<std::size_t>();
      r.graph.X = detail::tensor_from_json(j.at("nodes"));
      for (const auto& k : j.at("node_kind"))
        r.graph.node_kind.push_back(k.get<std::string>() == "stuff"
                                        ? NodeKind::stuff
                                        : NodeKind::thing);
      for (const auto& e : j.at("edges"))
        r.graph.edges.push_back({e[0].get<std::size_t>(),
                                 e[1].get<std::size_t>()});
      r.caption = j.at("caption").get<std::string>();
      r.split = j.at("split").get<std::string>();
      if (r.graph.node_kind.size() != r.graph.X.rows())
        throw std::runtime_error("node_kind length mismatch");
      r.graph.validate();
      ds.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error("load_dataset: invalid record at line " +
                               std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header)
    throw std::runtime_error("load_dataset: missing header line in " + path);
  return ds;
}

struct DatasetConfig {
  std::size_t n_train = 2000;
  std::size_t n_val = 200;
  std::size_t n_test = 200;
  std::size_t d = 16;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
};

inline Dataset generate_dataset(const DatasetConfig& cfg) {
  RngStream root(cfg.seed, /*stream_id=*/0xDA7A);
  Dataset ds;
  ds.d = cfg.d;
  ds.codebook = make_codebook(cfg.d, root.split(0));
  ds.vocab = caption_vocabulary();
  std::size_t total = cfg.n_train + cfg.n_val + cfg.n_test;
  for (std::size_t id = 0; id < total; ++id) {
    RngStream s = root.split(1 + id);
    SceneRecord r;
    r.id = id;
    SceneSpec spec = generate_scene(s.split(0));
    r.graph = render_features(spec, ds.codebook, cfg.noise_sigma, s.split(1));
    r.caption = caption_scene(spec, s.split(2));
    r.split = id < cfg.n_train          ? "train"
              : id < cfg.n_train + cfg.n_val ? "val"
                                             : "test";
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace gshn
