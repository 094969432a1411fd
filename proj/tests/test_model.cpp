#include "dcah/model.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace dcah;

namespace {

PropagationOperator identity_op(Index n, OperatorKind kind) {
  std::vector<Eigen::Triplet<Real>> t;
  for (Index i = 0; i < n; ++i) t.emplace_back(i, i, 1.0);
  SpMat s(n, n);
  s.setFromTriplets(t.begin(), t.end());
  return PropagationOperator{std::move(s), kind};
}

// Plain value-space reference of the convolution stack: relu between layers,
// linear last layer.
Mat channel_oracle(const Mat& op, const Mat& x0, const std::vector<Mat>& thetas) {
  Mat h = x0;
  for (std::size_t l = 0; l < thetas.size(); ++l) {
    h = oracle::matmul(oracle::matmul(op, h), thetas[l]);
    if (l + 1 < thetas.size()) h = h.cwiseMax(0.0);
  }
  return h;
}

struct TinyWorld {
  BipartiteGraph graph;
  Hypergraph hyper;
  PropagationOperator bop;
  PropagationOperator hop;
};

TinyWorld tiny_world() {
  BipartiteGraph g(3, 4, {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 3}, {2, 0}});
  Hypergraph h = build_hypergraph(4, {{0, 1, 2}, {2, 3}, {1, 3}});
  PropagationOperator bop = bipartite_operator(g);
  PropagationOperator hop = hypergraph_operator(h);
  return TinyWorld{std::move(g), std::move(h), std::move(bop), std::move(hop)};
}

}  // namespace

TEST_CASE("identity operator with identity weights is the identity map") {
  Rng rng(1);
  ModelConfig cfg;
  cfg.hidden_dim = 3;
  cfg.layers = 1;
  cfg.mode = ModelMode::gcn_only;
  cfg.dropout = 0.0;
  Mat qf = random_normal(2, 3, 1.0, rng);
  DcahModel model = DcahModel::init(cfg, qf, 2, rng);

  // Force theta to the identity.
  for (NamedParam p : model.parameters()) {
    if (p.name == "theta_bg_0") *p.value = Mat::Identity(3, 3);
  }
  PropagationOperator op = identity_op(4, OperatorKind::bipartite);
  DcahModel::Embeddings emb = model.embed(&op, nullptr);
  CHECK((emb.queries - qf).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-edge bipartite propagation matches the 2-node example") {
  // One query, one item, X0 = [[1],[0]], theta = [[1]]: output [[0.5],[0.5]].
  Rng rng(2);
  ModelConfig cfg;
  cfg.hidden_dim = 1;
  cfg.layers = 1;
  cfg.mode = ModelMode::gcn_only;
  cfg.dropout = 0.0;
  Mat qf(1, 1);
  qf << 1.0;
  DcahModel model = DcahModel::init(cfg, qf, 1, rng);
  for (NamedParam p : model.parameters()) {
    if (p.name == "theta_bg_0") *p.value = Mat::Ones(1, 1);
    if (p.name == "item_emb_bg") *p.value = Mat::Zero(1, 1);
  }
  BipartiteGraph g(1, 1, {{0, 0}});
  PropagationOperator op = bipartite_operator(g);
  DcahModel::Embeddings emb = model.embed(&op, nullptr);
  CHECK(emb.queries(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(emb.items(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("hypergraph channel: single hyperedge averaging and isolated zero rows") {
  Rng rng(3);
  ModelConfig cfg;
  cfg.hidden_dim = 1;
  cfg.layers = 1;
  cfg.mode = ModelMode::hyper_only;
  cfg.dropout = 0.0;
  Mat qf = Mat::Zero(1, 1);
  DcahModel model = DcahModel::init(cfg, qf, 3, rng);
  Mat x0(3, 1);
  x0 << 1.0, 0.0, 5.0;  // item 2 isolated
  for (NamedParam p : model.parameters()) {
    if (p.name == "theta_hg_0") *p.value = Mat::Ones(1, 1);
    if (p.name == "item_emb_hg") *p.value = x0;
  }
  Hypergraph h = build_hypergraph(3, {{0, 1}});
  PropagationOperator op = hypergraph_operator(h);
  DcahModel::Embeddings emb = model.embed(nullptr, &op);
  CHECK(emb.items(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(emb.items(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(emb.items(2, 0) == 0.0);
}

TEST_CASE("two-layer forward equals dense oracle composition") {
  Rng rng(4);
  TinyWorld w = tiny_world();
  ModelConfig cfg;
  cfg.hidden_dim = 5;
  cfg.layers = 2;
  cfg.mode = ModelMode::dcah;
  cfg.dropout = 0.0;
  Mat qf = random_normal(3, 5, 1.0, rng);
  DcahModel model = DcahModel::init(cfg, qf, 4, rng);

  Mat item_bg, item_hg;
  std::vector<Mat> theta_bg(2), theta_hg(2);
  for (NamedParam p : model.parameters()) {
    if (p.name == "item_emb_bg") item_bg = *p.value;
    if (p.name == "item_emb_hg") item_hg = *p.value;
    if (p.name == "theta_bg_0") theta_bg[0] = *p.value;
    if (p.name == "theta_bg_1") theta_bg[1] = *p.value;
    if (p.name == "theta_hg_0") theta_hg[0] = *p.value;
    if (p.name == "theta_hg_1") theta_hg[1] = *p.value;
  }
  Mat x0(7, 5);
  x0.topRows(3) = qf;
  x0.bottomRows(4) = item_bg;
  Mat bg_out = channel_oracle(Mat(w.bop.normalized), x0, theta_bg);
  Mat hg_out = channel_oracle(Mat(w.hop.normalized), item_hg, theta_hg);

  Tape tape;
  ForwardOptions opts;
  ForwardResult res = model.forward(tape, &w.bop, &w.hop, opts);
  CHECK((tape.value(res.query_emb) - bg_out.topRows(3)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((tape.value(res.item_emb_bg) - bg_out.bottomRows(4)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((tape.value(res.item_emb_hg) - hg_out).cwiseAbs().maxCoeff() <= 1e-10);

  // Fused output is the beta-weighted combination of the channel outputs.
  Mat fused = res.beta[0] * bg_out.bottomRows(4) + res.beta[1] * hg_out;
  CHECK((tape.value(res.item_emb) - fused).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("fusion: beta properties") {
  Rng rng(5);
  const Index n = 6, d = 4;

  SUBCASE("identical channel inputs give beta = [0.5, 0.5]") {
    Tape tape;
    Mat x = random_normal(n, d, 1.0, rng);
    NodeId a = tape.constant(x);
    NodeId b = tape.constant(x);
    NodeId w = tape.param(random_normal(d, d, 1.0, rng));
    NodeId bias = tape.param(random_normal(d, 1, 1.0, rng));
    NodeId q = tape.param(random_normal(d, 1, 1.0, rng));
    FusionResult f = fuse_channels(tape, a, b, w, bias, q);
    CHECK(tape.value(f.beta)(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(tape.value(f.beta)(0, 1) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK((tape.value(f.fused) - x).cwiseAbs().maxCoeff() <= 1e-9);
  }

  SUBCASE("zero attention parameters give beta = [0.5, 0.5]") {
    Tape tape;
    NodeId a = tape.constant(random_normal(n, d, 1.0, rng));
    NodeId b = tape.constant(random_normal(n, d, 1.0, rng));
    NodeId w = tape.param(Mat::Zero(d, d));
    NodeId bias = tape.param(Mat::Zero(d, 1));
    NodeId q = tape.param(random_normal(d, 1, 1.0, rng));
    FusionResult f = fuse_channels(tape, a, b, w, bias, q);
    CHECK(tape.value(f.beta)(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("beta matches the scalar per-node oracle") {
    Mat xa = random_normal(n, d, 1.0, rng);
    Mat xb = random_normal(n, d, 1.0, rng);
    Mat w = random_normal(d, d, 1.0, rng);
    Mat bias = random_normal(d, 1, 1.0, rng);
    Mat q = random_normal(d, 1, 1.0, rng);

    auto importance = [&](const Mat& x) {
      Real total = 0.0;
      for (Index i = 0; i < n; ++i) {
        Real acc = 0.0;
        for (Index k = 0; k < d; ++k) {
          Real pre = bias(k, 0);
          for (Index c = 0; c < d; ++c) pre += x(i, c) * w(c, k);
          acc += q(k, 0) * std::tanh(pre);
        }
        total += acc;
      }
      return total / static_cast<Real>(n);
    };
    const Real wa = importance(xa), wb = importance(xb);
    const Real ba = std::exp(wa) / (std::exp(wa) + std::exp(wb));

    Tape tape;
    FusionResult f = fuse_channels(tape, tape.constant(xa), tape.constant(xb),
                                   tape.param(w), tape.param(bias), tape.param(q));
    CHECK(tape.value(f.beta)(0, 0) == doctest::Approx(ba).epsilon(1e-10));
    CHECK(tape.value(f.beta).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("beta invariant to swapping channels together with labels") {
    Mat xa = random_normal(n, d, 1.0, rng);
    Mat xb = random_normal(n, d, 1.0, rng);
    Mat w = random_normal(d, d, 1.0, rng);
    Mat bias = random_normal(d, 1, 1.0, rng);
    Mat q = random_normal(d, 1, 1.0, rng);
    Tape t1, t2;
    FusionResult f1 = fuse_channels(t1, t1.constant(xa), t1.constant(xb),
                                    t1.param(w), t1.param(bias), t1.param(q));
    FusionResult f2 = fuse_channels(t2, t2.constant(xb), t2.constant(xa),
                                    t2.param(w), t2.param(bias), t2.param(q));
    CHECK(t1.value(f1.beta)(0, 0) == doctest::Approx(t2.value(f2.beta)(0, 1)).epsilon(1e-12));
    CHECK(t1.value(f1.beta)(0, 1) == doctest::Approx(t2.value(f2.beta)(0, 0)).epsilon(1e-12));
  }

  SUBCASE("softmax shift invariance on channel importances") {
    for (Real shift : {0.0, 1.5, -42.0}) {
      Tape tape;
      Mat w(1, 2);
      w << 0.3, -0.7;
      Mat shifted = w.array() + shift;
      Mat b1 = tape.value(tape.softmax(tape.constant(w)));
      Mat b2 = tape.value(tape.softmax(tape.constant(shifted)));
      CHECK((b1 - b2).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("score_links: orthogonal, aligned and random batches") {
  Mat xq(2, 2), xi(2, 2);
  xq << 1.0, 0.0, 0.0, 1.0;
  xi << 0.0, 1.0, 0.0, 1.0;
  Vec s = score_links(xq, xi, {{0, 0}, {1, 1}});
  CHECK(s[0] == 0.0);  // orthogonal
  CHECK(s[1] == 1.0);  // identical unit vectors

  Rng rng(6);
  Mat a = random_normal(5, 3, 1.0, rng);
  Mat b = random_normal(7, 3, 1.0, rng);
  std::vector<Edge> pairs{{0, 6}, {4, 2}, {3, 3}};
  Vec got = score_links(a, b, pairs);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    Real want = 0.0;
    for (Index c = 0; c < 3; ++c) want += a(pairs[k].first, c) * b(pairs[k].second, c);
    CHECK(got[static_cast<Index>(k)] == want);
  }
  CHECK_THROWS_AS(score_links(a, b, {{5, 0}}), InputError);
}

TEST_CASE("mode reductions") {
  Rng rng(7);
  TinyWorld w = tiny_world();
  ModelConfig cfg;
  cfg.hidden_dim = 4;
  cfg.layers = 2;
  cfg.dropout = 0.0;
  Mat qf = random_normal(3, 4, 1.0, rng);

  cfg.mode = ModelMode::dcah;
  DcahModel dcah = DcahModel::init(cfg, qf, 4, rng);

  SUBCASE("gcn_only equals the bipartite channel, beta = [1,0]") {
    cfg.mode = ModelMode::gcn_only;
    Rng rng2(7);
    DcahModel gcn = DcahModel::init(cfg, qf, 4, rng2);
    DcahModel::Embeddings emb = gcn.embed(&w.bop, nullptr);
    CHECK(emb.beta[0] == 1.0);
    CHECK(emb.beta[1] == 0.0);
    Tape tape;
    ForwardOptions opts;
    ForwardResult res = gcn.forward(tape, &w.bop, &w.hop, opts);
    CHECK((tape.value(res.item_emb) - tape.value(res.item_emb_bg)).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("hyper_only passes query features through untouched") {
    cfg.mode = ModelMode::hyper_only;
    Rng rng2(7);
    DcahModel hyper = DcahModel::init(cfg, qf, 4, rng2);
    DcahModel::Embeddings emb = hyper.embed(nullptr, &w.hop);
    CHECK((emb.queries - qf).cwiseAbs().maxCoeff() == 0.0);  // bit-equal
    CHECK(emb.beta[0] == 0.0);
    CHECK(emb.beta[1] == 1.0);
  }

  SUBCASE("dcah with identical channels reduces to the channel output") {
    Tape tape;
    Mat x = random_normal(4, 4, 1.0, rng);
    NodeId a = tape.constant(x);
    FusionResult f = fuse_channels(tape, a, a, tape.param(random_normal(4, 4, 1.0, rng)),
                                   tape.param(Mat::Zero(4, 1)),
                                   tape.param(random_normal(4, 1, 1.0, rng)));
    CHECK((tape.value(f.fused) - x).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("operator/mode mismatch raises config errors") {
    Tape tape;
    ForwardOptions opts;
    CHECK_THROWS_AS(dcah.forward(tape, &w.bop, nullptr, opts), ConfigError);
    CHECK_THROWS_AS(dcah.forward(tape, nullptr, &w.hop, opts), ConfigError);
    CHECK_THROWS_AS(dcah.forward(tape, &w.hop, &w.bop, opts), ConfigError);
  }
}

TEST_CASE("end-to-end gradient check on a 10-node dual-channel instance") {
  Rng rng(8);
  BipartiteGraph g(4, 6, {{0, 0}, {0, 1}, {1, 2}, {1, 3}, {2, 4}, {2, 0}, {3, 5}, {3, 2}});
  Hypergraph h = build_hypergraph(6, {{0, 1, 2}, {3, 4}, {2, 5}, {1, 4, 5}});
  PropagationOperator bop = bipartite_operator(g);
  PropagationOperator hop = hypergraph_operator(h);

  ModelConfig cfg;
  cfg.hidden_dim = 3;
  cfg.layers = 2;
  cfg.mode = ModelMode::dcah;
  cfg.dropout = 0.0;
  Mat qf = random_normal(4, 3, 1.0, rng);
  DcahModel model = DcahModel::init(cfg, qf, 6, rng);

  std::vector<Edge> pairs{{0, 0}, {1, 3}, {2, 5}, {3, 1}};
  Vec targets(4);
  targets << 1.0, 1.0, 0.0, 0.0;

  auto loss_value = [&]() -> Real {
    Tape tape;
    ForwardOptions opts;
    ForwardResult res = model.forward(tape, &bop, &hop, opts);
    NodeId scores = tape.pair_dot(res.query_emb, res.item_emb, pairs);
    return tape.value(tape.bce_with_logits(scores, targets))(0, 0);
  };

  Tape tape;
  ForwardOptions opts;
  ForwardResult res = model.forward(tape, &bop, &hop, opts);
  NodeId scores = tape.pair_dot(res.query_emb, res.item_emb, pairs);
  NodeId loss = tape.bce_with_logits(scores, targets);
  tape.backward(loss);

  for (NamedParam p : model.parameters()) {
    if (p.name.rfind("proj_", 0) == 0) continue;  // head unused by this loss
    Mat analytic = Mat::Zero(p.value->rows(), p.value->cols());
    for (const auto& [name, node] : res.bindings) {
      if (name == p.name) analytic += tape.grad(node);
    }
    auto fd = oracle::fd_gradients(loss_value, {p.value});
    CHECK_MESSAGE(oracle::max_rel_error(analytic, fd[0]) <= 1e-4, p.name);
  }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(9);
  ModelConfig cfg;
  cfg.hidden_dim = 4;
  cfg.layers = 2;
  cfg.mode = ModelMode::dcah;
  Mat qf = random_normal(5, 4, 1.0, rng);
  DcahModel model = DcahModel::init(cfg, qf, 7, rng);

  const std::string path = "/tmp/dcah_test_checkpoint.json";
  model.save(path);
  DcahModel loaded = DcahModel::load(path);
  CHECK(loaded.config().mode == cfg.mode);
  CHECK(loaded.config().hidden_dim == 4);
  CHECK(loaded.num_queries() == 5);
  CHECK(loaded.num_items() == 7);
  CHECK((loaded.query_features() - model.query_features()).cwiseAbs().maxCoeff() == 0.0);

  auto a = model.parameters();
  auto b = loaded.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].name == b[k].name);
    CHECK((*a[k].value - *b[k].value).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(DcahModel::load("/tmp/does_not_exist_dcah.json"), InputError);
}
