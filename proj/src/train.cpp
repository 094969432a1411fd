#include "dcah/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dcah {

void TrainConfig::validate() const {
  if (lr < 0.0) throw ConfigError("train: negative learning rate");
  if (tau <= 0.0) throw ConfigError("train: temperature must be positive");
  if (dropedge_rate < 0.0 || dropedge_rate >= 1.0) {
    throw ConfigError("train: dropedge rate must lie in [0, 1)");
  }
  if (aug_edge_drop < 0.0 || aug_edge_drop >= 1.0 || aug_feature_mask < 0.0 ||
      aug_feature_mask >= 1.0) {
    throw ConfigError("train: augmentation rates must lie in [0, 1)");
  }
  if (batch_size < 2) throw ConfigError("train: batch size must be at least 2");
  if (ssl_epochs < 0 || train_epochs < 0) throw ConfigError("train: negative epoch count");
  if (negatives_per_positive < 1) throw ConfigError("train: need at least one negative");
}

// =============================================================================
// Structural augmentation
// =============================================================================

BipartiteGraph dropedge(const BipartiteGraph& g, Real rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropedge: rate must lie in [0, 1)");
  if (rate == 0.0) return g;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<Edge> kept;
  kept.reserve(g.edges().size());
  for (const Edge& e : g.edges()) {
    if (keep(rng)) kept.push_back(e);
  }
  return BipartiteGraph(g.num_queries(), g.num_items(), std::move(kept));
}

Hypergraph dropedge(const Hypergraph& h, Real rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropedge: rate must lie in [0, 1)");
  if (rate == 0.0) return h;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<std::vector<Index>> records;
  records.reserve(h.hyperedges().size());
  for (const auto& members : h.hyperedges()) {
    std::vector<Index> survivors;
    survivors.reserve(members.size());
    for (Index item : members) {
      if (keep(rng)) survivors.push_back(item);
    }
    records.push_back(std::move(survivors));
  }
  return build_hypergraph(h.num_items(), records);
}

namespace {

GraphView make_view(const BipartiteGraph& g, const Hypergraph& h,
                    const Mat& query_features, const AugmentSpec& spec, Rng& rng) {
  BipartiteGraph gb = dropedge(g, spec.edge_drop, rng);
  Hypergraph gh = dropedge(h, spec.edge_drop, rng);
  Mat feats = query_features;
  if (spec.feature_mask > 0.0) {
    std::bernoulli_distribution drop(spec.feature_mask);
    for (Index c = 0; c < feats.cols(); ++c) {
      if (drop(rng)) feats.col(c).setZero();
    }
  }
  PropagationOperator bop = bipartite_operator(gb);
  PropagationOperator hop = hypergraph_operator(gh);
  return GraphView{std::move(gb), std::move(gh), std::move(bop), std::move(hop),
                   std::move(feats)};
}

}  // namespace

AugmentedPair augment(const BipartiteGraph& g, const Hypergraph& h,
                      const Mat& query_features, const AugmentSpec& spec, Rng& rng) {
  GraphView vi = make_view(g, h, query_features, spec, rng);
  GraphView vj = make_view(g, h, query_features, spec, rng);
  return AugmentedPair{std::move(vi), std::move(vj)};
}

// =============================================================================
// Losses and optimizer
// =============================================================================

NodeId contrastive_loss(Tape& tape, NodeId z_i, NodeId z_j, Real tau,
                        bool include_positive) {
  if (tape.value(z_i).rows() != tape.value(z_j).rows()) {
    throw ShapeError("contrastive_loss: batch sizes differ");
  }
  NodeId sims = tape.matmul_nt(tape.row_normalize(z_i), tape.row_normalize(z_j));
  return tape.cross_view_nll(tape.scale(sims, 1.0 / tau), include_positive);
}

Adam::Adam(Real lr, Real beta1, Real beta2, Real eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::string& name, Mat& param, const Mat& grad) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw ShapeError("adam: gradient shape mismatch for " + name);
  }
  State& s = state_[name];
  if (s.t == 0) {
    s.m = Mat::Zero(param.rows(), param.cols());
    s.v = Mat::Zero(param.rows(), param.cols());
  }
  ++s.t;
  s.m = beta1_ * s.m + (1.0 - beta1_) * grad;
  s.v = beta2_ * s.v + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const Real mc = 1.0 - std::pow(beta1_, static_cast<Real>(s.t));
  const Real vc = 1.0 - std::pow(beta2_, static_cast<Real>(s.t));
  param.array() -= lr_ * (s.m.array() / mc) /
                   ((s.v.array() / vc).sqrt() + eps_);
}

std::map<std::string, Mat> collect_gradients(const Tape& tape, const Bindings& bindings) {
  std::map<std::string, Mat> grads;
  for (const auto& [name, node] : bindings) {
    auto it = grads.find(name);
    if (it == grads.end()) {
      grads.emplace(name, tape.grad(node));
    } else {
      it->second += tape.grad(node);
    }
  }
  return grads;
}

// =============================================================================
// Training loops
// =============================================================================

namespace {

std::vector<Index> sample_batch(Index population, Index batch_size, Rng& rng) {
  std::vector<Index> ids(static_cast<std::size_t>(population));
  std::iota(ids.begin(), ids.end(), Index{0});
  if (batch_size >= population) return ids;
  for (Index k = 0; k < batch_size; ++k) {
    std::uniform_int_distribution<Index> pick(k, population - 1);
    std::swap(ids[static_cast<std::size_t>(k)], ids[static_cast<std::size_t>(pick(rng))]);
  }
  ids.resize(static_cast<std::size_t>(batch_size));
  return ids;
}

void apply_gradients(DcahModel& model, Adam& adam,
                     const std::map<std::string, Mat>& grads) {
  for (NamedParam p : model.parameters()) {
    auto it = grads.find(p.name);
    if (it != grads.end()) adam.step(p.name, *p.value, it->second);
  }
}

Real validation_mrr(const DcahModel& model, const PropagationOperator& bop,
                    const PropagationOperator& hop, const EvalProtocol& protocol) {
  const DcahModel::Embeddings emb = model.embed(&bop, &hop);
  std::vector<RankedScores> scored;
  for (int p = 0; p < kNumParts; ++p) {
    const auto& split = protocol.parts[static_cast<std::size_t>(p)];
    const auto& negs = protocol.val_negatives[static_cast<std::size_t>(p)];
    for (std::size_t k = 0; k < split.val.size(); ++k) {
      RankedScores rs;
      rs.positive = score_links(emb.queries, emb.items, {split.val[k]})[0];
      Vec ns = score_links(emb.queries, emb.items, negs[k]);
      rs.negatives.assign(ns.data(), ns.data() + ns.size());
      scored.push_back(std::move(rs));
    }
  }
  if (scored.empty()) return 0.0;
  return mrr(scored);
}

}  // namespace

SslLog pretrain_ssl(DcahModel& model, const BipartiteGraph& g, const Hypergraph& h,
                    const TrainConfig& cfg) {
  cfg.validate();
  SslLog log;
  if (cfg.ssl_epochs == 0) return log;

  Rng rng_aug(derive_seed(cfg.seed, "ssl_aug"));
  Rng rng_batch(derive_seed(cfg.seed, "ssl_batch"));
  Rng rng_dropout(derive_seed(cfg.seed, "ssl_dropout"));
  Adam adam(cfg.lr);
  const AugmentSpec aug_spec{cfg.aug_edge_drop, cfg.aug_feature_mask};
  const Index total_nodes = model.num_queries() + model.num_items();

  for (int epoch = 0; epoch < cfg.ssl_epochs; ++epoch) {
    AugmentedPair views = augment(g, h, model.query_features(), aug_spec, rng_aug);
    const std::vector<Index> batch =
        sample_batch(total_nodes, cfg.batch_size, rng_batch);

    Tape tape;
    Bindings bindings;
    auto encode = [&](const GraphView& view) {
      ForwardOptions opts;
      opts.training = true;
      opts.rng = &rng_dropout;
      opts.query_features = &view.query_features;
      ForwardResult res =
          model.forward(tape, &view.bipartite_op, &view.hypergraph_op, opts);
      bindings.insert(bindings.end(), res.bindings.begin(), res.bindings.end());
      NodeId all = tape.vstack(res.query_emb, res.item_emb);
      return model.project(tape, tape.gather_rows(all, batch), bindings);
    };
    NodeId z_i = encode(views.view_i);
    NodeId z_j = encode(views.view_j);
    NodeId loss = contrastive_loss(tape, z_i, z_j, cfg.tau,
                                   cfg.nt_xent_include_positive);
    const Real loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value)) {
      throw NumericError("ssl: loss diverged at epoch " + std::to_string(epoch));
    }
    tape.backward(loss);
    apply_gradients(model, adam, collect_gradients(tape, bindings));
    log.losses.push_back(loss_value);
  }
  return log;
}

TrainLog train_link_prediction(DcahModel& model, const BipartiteGraph& structure,
                               const Hypergraph& h, const EvalProtocol& protocol,
                               const TrainConfig& cfg) {
  cfg.validate();
  const std::vector<Edge> positives = protocol.all_train_edges();
  if (positives.empty()) throw InputError("train: empty train split");

  Rng rng_dropedge(derive_seed(cfg.seed, "train_dropedge"));
  Rng rng_negatives(derive_seed(cfg.seed, "train_negatives"));
  Rng rng_dropout(derive_seed(cfg.seed, "train_dropout"));
  Adam adam(cfg.lr);

  const PropagationOperator base_bop = bipartite_operator(structure);
  const PropagationOperator base_hop = hypergraph_operator(h);

  std::uniform_int_distribution<Index> rand_query(0, structure.num_queries() - 1);
  std::uniform_int_distribution<Index> rand_item(0, structure.num_items() - 1);

  TrainLog log;
  Real best_mrr = -1.0;
  std::vector<Mat> best_params;
  auto snapshot = [&] {
    best_params.clear();
    for (NamedParam p : model.parameters()) best_params.push_back(*p.value);
  };

  for (int epoch = 0; epoch < cfg.train_epochs; ++epoch) {
    // Fresh structural sample per epoch under DropEdge; operators rebuilt.
    const bool dropped = cfg.dropedge_rate > 0.0;
    PropagationOperator bop = base_bop;
    PropagationOperator hop = base_hop;
    if (dropped) {
      bop = bipartite_operator(dropedge(structure, cfg.dropedge_rate, rng_dropedge));
      hop = hypergraph_operator(dropedge(h, cfg.dropedge_rate, rng_dropedge));
    }

    std::vector<Edge> pairs = positives;
    pairs.reserve(positives.size() * (1 + static_cast<std::size_t>(cfg.negatives_per_positive)));
    Vec targets(static_cast<Index>(positives.size()) * (1 + cfg.negatives_per_positive));
    targets.setZero();
    targets.head(static_cast<Index>(positives.size())).setOnes();
    for (const auto& [q, i] : positives) {
      for (int k = 0; k < cfg.negatives_per_positive; ++k) {
        Edge neg;
        do {
          neg = (k % 2 == 0) ? Edge{rand_query(rng_negatives), i}
                             : Edge{q, rand_item(rng_negatives)};
        } while (structure.has_edge(neg.first, neg.second));
        pairs.push_back(neg);
      }
    }

    Tape tape;
    ForwardOptions opts;
    opts.training = true;
    opts.rng = &rng_dropout;
    ForwardResult res = model.forward(tape, &bop, &hop, opts);
    NodeId scores = tape.pair_dot(res.query_emb, res.item_emb, pairs);
    NodeId loss = tape.bce_with_logits(scores, targets);
    const Real loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value)) {
      throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
    }
    tape.backward(loss);
    apply_gradients(model, adam, collect_gradients(tape, res.bindings));
    log.losses.push_back(loss_value);

    const Real vm = validation_mrr(model, base_bop, base_hop, protocol);
    log.val_mrrs.push_back(vm);
    if (vm > best_mrr) {
      best_mrr = vm;
      log.best_epoch = epoch;
      snapshot();
    }
  }

  if (!best_params.empty()) {
    std::size_t k = 0;
    for (NamedParam p : model.parameters()) *p.value = best_params[k++];
  }
  return log;
}

PipelineLog train_full(DcahModel& model, const BipartiteGraph& structure,
                       const Hypergraph& h, const EvalProtocol& protocol,
                       const TrainConfig& cfg) {
  PipelineLog log;
  log.ssl = pretrain_ssl(model, structure, h, cfg);
  log.supervised = train_link_prediction(model, structure, h, protocol, cfg);
  return log;
}

}  // namespace dcah
