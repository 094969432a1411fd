#include "dcah/model.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace dcah {

using json = nlohmann::ordered_json;

ModelMode parse_model_mode(const std::string& s) {
  if (s == "dcah") return ModelMode::dcah;
  if (s == "gcn_only") return ModelMode::gcn_only;
  if (s == "hyper_only") return ModelMode::hyper_only;
  throw ConfigError("unknown model mode: " + s);
}

std::string to_string(ModelMode m) {
  switch (m) {
    case ModelMode::dcah: return "dcah";
    case ModelMode::gcn_only: return "gcn_only";
    case ModelMode::hyper_only: return "hyper_only";
  }
  throw ConfigError("invalid model mode value");
}

DcahModel DcahModel::init(const ModelConfig& cfg, Mat query_features,
                          Index num_items, Rng& rng) {
  if (cfg.layers < 1) throw ConfigError("model: layers must be >= 1");
  if (cfg.hidden_dim < 1) throw ConfigError("model: hidden_dim must be >= 1");
  if (query_features.cols() != cfg.hidden_dim) {
    throw ShapeError("model: query feature dim must equal hidden_dim");
  }
  const Index d = cfg.hidden_dim;
  const Real s = 1.0 / std::sqrt(static_cast<Real>(d));

  DcahModel m;
  m.cfg_ = cfg;
  m.num_items_ = num_items;
  m.query_features_ = std::move(query_features);
  m.item_emb_bg_ = random_normal(num_items, d, s, rng);
  m.item_emb_hg_ = random_normal(num_items, d, s, rng);
  m.theta_bg_.reserve(static_cast<std::size_t>(cfg.layers));
  m.theta_hg_.reserve(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    m.theta_bg_.push_back(random_normal(d, d, s, rng));
    m.theta_hg_.push_back(random_normal(d, d, s, rng));
  }
  m.attn_w_ = random_normal(d, d, s, rng);
  m.attn_b_ = Mat::Zero(d, 1);
  m.attn_q_ = random_normal(d, 1, s, rng);
  m.proj_w1_ = random_normal(d, d, s, rng);
  m.proj_b1_ = Mat::Zero(d, 1);
  m.proj_w2_ = random_normal(d, d, s, rng);
  m.proj_b2_ = Mat::Zero(d, 1);
  return m;
}

std::vector<NamedParam> DcahModel::parameters() {
  std::vector<NamedParam> out;
  const bool use_bg = cfg_.mode != ModelMode::hyper_only;
  const bool use_hg = cfg_.mode != ModelMode::gcn_only;
  if (use_bg) {
    out.push_back({"item_emb_bg", &item_emb_bg_});
    for (std::size_t l = 0; l < theta_bg_.size(); ++l) {
      out.push_back({"theta_bg_" + std::to_string(l), &theta_bg_[l]});
    }
  }
  if (use_hg) {
    out.push_back({"item_emb_hg", &item_emb_hg_});
    for (std::size_t l = 0; l < theta_hg_.size(); ++l) {
      out.push_back({"theta_hg_" + std::to_string(l), &theta_hg_[l]});
    }
  }
  if (cfg_.mode == ModelMode::dcah) {
    out.push_back({"attn_w", &attn_w_});
    out.push_back({"attn_b", &attn_b_});
    out.push_back({"attn_q", &attn_q_});
  }
  out.push_back({"proj_w1", &proj_w1_});
  out.push_back({"proj_b1", &proj_b1_});
  out.push_back({"proj_w2", &proj_w2_});
  out.push_back({"proj_b2", &proj_b2_});
  return out;
}

NodeId DcahModel::forward_channel(Tape& tape, const SpMat& op, NodeId x0,
                                  const std::vector<Mat>& thetas,
                                  const char* prefix, const ForwardOptions& opts,
                                  Bindings& bindings) const {
  const bool dropout_on = opts.training && cfg_.dropout > 0.0;
  if (dropout_on && opts.rng == nullptr) {
    throw StateError("forward: training with dropout requires an rng");
  }
  NodeId h = x0;
  for (std::size_t l = 0; l < thetas.size(); ++l) {
    NodeId theta = tape.param(thetas[l]);
    bindings.emplace_back(std::string(prefix) + std::to_string(l), theta);
    h = tape.matmul(tape.spmm(op, h), theta);
    const bool last = l + 1 == thetas.size();
    if (!last) {
      h = tape.relu(h);
      if (dropout_on) {
        const Mat& v = tape.value(h);
        std::bernoulli_distribution keep(1.0 - cfg_.dropout);
        Mat mask(v.rows(), v.cols());
        const Real inv_keep = 1.0 / (1.0 - cfg_.dropout);
        for (Index i = 0; i < v.rows(); ++i) {
          for (Index j = 0; j < v.cols(); ++j) {
            mask(i, j) = keep(*opts.rng) ? inv_keep : 0.0;
          }
        }
        h = tape.hadamard(h, mask);
      }
    }
  }
  return h;
}

FusionResult fuse_channels(Tape& tape, NodeId item_bg, NodeId item_hg,
                           NodeId attn_w, NodeId attn_b, NodeId attn_q) {
  const Index n = tape.value(item_bg).rows();
  if (tape.value(item_hg).rows() != n) {
    throw ShapeError("fuse_channels: item counts differ");
  }
  auto importance = [&](NodeId x) {
    NodeId t = tape.tanh(tape.add_row(tape.matmul(x, attn_w), attn_b));
    NodeId v = tape.matmul(t, attn_q);  // n x 1
    return tape.scale(tape.sum(v), 1.0 / static_cast<Real>(n));
  };
  NodeId w = tape.stack_scalars({importance(item_bg), importance(item_hg)});
  NodeId beta = tape.softmax(w);
  NodeId fused = tape.add(tape.scalar_mul(tape.elem(beta, 0, 0), item_bg),
                          tape.scalar_mul(tape.elem(beta, 0, 1), item_hg));
  return FusionResult{fused, beta};
}

ForwardResult DcahModel::forward(Tape& tape, const PropagationOperator* bipartite,
                                 const PropagationOperator* hypergraph,
                                 const ForwardOptions& opts) const {
  const bool use_bg = cfg_.mode != ModelMode::hyper_only;
  const bool use_hg = cfg_.mode != ModelMode::gcn_only;
  if (use_bg && (bipartite == nullptr || bipartite->kind != OperatorKind::bipartite)) {
    throw ConfigError("forward: mode needs a bipartite operator");
  }
  if (use_hg && (hypergraph == nullptr || hypergraph->kind != OperatorKind::hypergraph)) {
    throw ConfigError("forward: mode needs a hypergraph operator");
  }
  const Mat& qf = opts.query_features ? *opts.query_features : query_features_;
  if (qf.rows() != num_queries() || qf.cols() != cfg_.hidden_dim) {
    throw ShapeError("forward: query feature shape mismatch");
  }

  ForwardResult res;
  if (use_bg) {
    if (bipartite->normalized.rows() != num_queries() + num_items_) {
      throw ConfigError("forward: bipartite operator size mismatch");
    }
    NodeId x_items = tape.param(item_emb_bg_);
    res.bindings.emplace_back("item_emb_bg", x_items);
    NodeId x0 = tape.vstack(tape.constant(qf), x_items);
    NodeId out = forward_channel(tape, bipartite->normalized, x0, theta_bg_,
                                 "theta_bg_", opts, res.bindings);
    res.query_emb = tape.slice_rows(out, 0, num_queries());
    res.item_emb_bg = tape.slice_rows(out, num_queries(), num_queries() + num_items_);
  } else {
    // No bipartite message passing: queries keep their raw features.
    res.query_emb = tape.constant(qf);
  }
  if (use_hg) {
    if (hypergraph->normalized.rows() != num_items_) {
      throw ConfigError("forward: hypergraph operator size mismatch");
    }
    NodeId x0 = tape.param(item_emb_hg_);
    res.bindings.emplace_back("item_emb_hg", x0);
    res.item_emb_hg = forward_channel(tape, hypergraph->normalized, x0, theta_hg_,
                                      "theta_hg_", opts, res.bindings);
  }

  switch (cfg_.mode) {
    case ModelMode::gcn_only:
      res.item_emb = res.item_emb_bg;
      res.beta = Vec(2);
      res.beta << 1.0, 0.0;
      break;
    case ModelMode::hyper_only:
      res.item_emb = res.item_emb_hg;
      res.beta = Vec(2);
      res.beta << 0.0, 1.0;
      break;
    case ModelMode::dcah: {
      NodeId w = tape.param(attn_w_);
      NodeId b = tape.param(attn_b_);
      NodeId q = tape.param(attn_q_);
      res.bindings.emplace_back("attn_w", w);
      res.bindings.emplace_back("attn_b", b);
      res.bindings.emplace_back("attn_q", q);
      FusionResult fusion = fuse_channels(tape, res.item_emb_bg, res.item_emb_hg, w, b, q);
      res.item_emb = fusion.fused;
      res.beta = tape.value(fusion.beta).row(0).transpose();
      break;
    }
  }
  return res;
}

NodeId DcahModel::project(Tape& tape, NodeId rows, Bindings& bindings) const {
  NodeId w1 = tape.param(proj_w1_);
  NodeId b1 = tape.param(proj_b1_);
  NodeId w2 = tape.param(proj_w2_);
  NodeId b2 = tape.param(proj_b2_);
  bindings.emplace_back("proj_w1", w1);
  bindings.emplace_back("proj_b1", b1);
  bindings.emplace_back("proj_w2", w2);
  bindings.emplace_back("proj_b2", b2);
  NodeId h = tape.relu(tape.add_row(tape.matmul(rows, w1), b1));
  return tape.add_row(tape.matmul(h, w2), b2);
}

DcahModel::Embeddings DcahModel::embed(const PropagationOperator* bipartite,
                                       const PropagationOperator* hypergraph) const {
  Tape tape;
  ForwardOptions opts;  // eval mode
  ForwardResult res = forward(tape, bipartite, hypergraph, opts);
  return Embeddings{tape.value(res.query_emb), tape.value(res.item_emb), res.beta};
}

Vec score_links(const Mat& query_emb, const Mat& item_emb,
                const std::vector<Edge>& pairs) {
  if (query_emb.cols() != item_emb.cols()) {
    throw ShapeError("score_links: embedding dims differ");
  }
  Vec scores(static_cast<Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [q, i] = pairs[k];
    if (q < 0 || q >= query_emb.rows() || i < 0 || i >= item_emb.rows()) {
      throw InputError("score_links: pair index out of range");
    }
    scores[static_cast<Index>(k)] = query_emb.row(q).dot(item_emb.row(i));
  }
  return scores;
}

// =============================================================================
// Checkpoint io
// =============================================================================

namespace {

json mat_to_json(const Mat& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<Real> data(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index c = 0; c < m.cols(); ++c) {
      data[static_cast<std::size_t>(i * m.cols() + c)] = m(i, c);
    }
  }
  j["data"] = std::move(data);
  return j;
}

Mat mat_from_json(const json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<Real>>();
  if (static_cast<Index>(data.size()) != rows * cols) {
    throw InputError("checkpoint: matrix payload size mismatch");
  }
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index c = 0; c < cols; ++c) {
      m(i, c) = data[static_cast<std::size_t>(i * cols + c)];
    }
  }
  return m;
}

}  // namespace

void DcahModel::save(const std::string& path) const {
  json j;
  j["format"] = "dcah-checkpoint-v1";
  j["config"] = {{"mode", to_string(cfg_.mode)},
                 {"hidden_dim", cfg_.hidden_dim},
                 {"layers", cfg_.layers},
                 {"dropout", cfg_.dropout},
                 {"num_queries", num_queries()},
                 {"num_items", num_items_}};
  json params;
  params["query_features"] = mat_to_json(query_features_);
  params["item_emb_bg"] = mat_to_json(item_emb_bg_);
  params["item_emb_hg"] = mat_to_json(item_emb_hg_);
  for (std::size_t l = 0; l < theta_bg_.size(); ++l) {
    params["theta_bg_" + std::to_string(l)] = mat_to_json(theta_bg_[l]);
    params["theta_hg_" + std::to_string(l)] = mat_to_json(theta_hg_[l]);
  }
  params["attn_w"] = mat_to_json(attn_w_);
  params["attn_b"] = mat_to_json(attn_b_);
  params["attn_q"] = mat_to_json(attn_q_);
  params["proj_w1"] = mat_to_json(proj_w1_);
  params["proj_b1"] = mat_to_json(proj_b1_);
  params["proj_w2"] = mat_to_json(proj_w2_);
  params["proj_b2"] = mat_to_json(proj_b2_);
  j["params"] = std::move(params);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("checkpoint: cannot open for writing: " + path);
  out << j.dump() << '\n';
}

DcahModel DcahModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("checkpoint: parse failure: " + std::string(e.what()));
  }
  if (j.value("format", "") != "dcah-checkpoint-v1") {
    throw InputError("checkpoint: unknown format");
  }
  const json& cfg = j.at("config");
  DcahModel m;
  m.cfg_.mode = parse_model_mode(cfg.at("mode").get<std::string>());
  m.cfg_.hidden_dim = cfg.at("hidden_dim").get<Index>();
  m.cfg_.layers = cfg.at("layers").get<int>();
  m.cfg_.dropout = cfg.at("dropout").get<Real>();
  m.num_items_ = cfg.at("num_items").get<Index>();

  const json& params = j.at("params");
  m.query_features_ = mat_from_json(params.at("query_features"));
  m.item_emb_bg_ = mat_from_json(params.at("item_emb_bg"));
  m.item_emb_hg_ = mat_from_json(params.at("item_emb_hg"));
  for (int l = 0; l < m.cfg_.layers; ++l) {
    m.theta_bg_.push_back(mat_from_json(params.at("theta_bg_" + std::to_string(l))));
    m.theta_hg_.push_back(mat_from_json(params.at("theta_hg_" + std::to_string(l))));
  }
  m.attn_w_ = mat_from_json(params.at("attn_w"));
  m.attn_b_ = mat_from_json(params.at("attn_b"));
  m.attn_q_ = mat_from_json(params.at("attn_q"));
  m.proj_w1_ = mat_from_json(params.at("proj_w1"));
  m.proj_b1_ = mat_from_json(params.at("proj_b1"));
  m.proj_w2_ = mat_from_json(params.at("proj_w2"));
  m.proj_b2_ = mat_from_json(params.at("proj_b2"));
  if (m.query_features_.rows() == 0 && m.num_items_ == 0) {
    throw InputError("checkpoint: empty model");
  }
  return m;
}

}  // namespace dcah
