#include "dcah/runner.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <thread>

namespace dcah {

ModeSpec parse_mode_spec(const std::string& s) {
  ModeSpec spec;
  std::stringstream ss(s);
  std::string token;
  bool first = true;
  while (std::getline(ss, token, '+')) {
    if (first) {
      spec.model = parse_model_mode(token);
      first = false;
    } else if (token == "ssl") {
      spec.ssl = true;
    } else if (token == "dropedge") {
      spec.dropedge = true;
    } else {
      throw ConfigError("unknown mode enhancement: " + token);
    }
  }
  if (first) throw ConfigError("empty mode string");
  return spec;
}

std::string mode_string(const ModeSpec& m) {
  std::string s = to_string(m.model);
  if (m.ssl) s += "+ssl";
  if (m.dropedge) s += "+dropedge";
  return s;
}

std::vector<ModeSpec> full_mode_matrix() {
  std::vector<ModeSpec> modes;
  for (ModelMode model : {ModelMode::gcn_only, ModelMode::hyper_only, ModelMode::dcah}) {
    for (bool ssl : {false, true}) {
      for (bool de : {false, true}) {
        modes.push_back(ModeSpec{model, ssl, de});
      }
    }
  }
  return modes;
}

ExperimentInputs make_inputs(BipartiteGraph graph, Hypergraph hypergraph,
                             Mat query_features, EvalProtocol protocol) {
  std::vector<Edge> structure_edges = protocol.all_train_edges();
  structure_edges.insert(structure_edges.end(), protocol.excluded_edges.begin(),
                         protocol.excluded_edges.end());
  BipartiteGraph structure(graph.num_queries(), graph.num_items(),
                           std::move(structure_edges));
  return ExperimentInputs{std::move(graph), std::move(hypergraph),
                          std::move(query_features), std::move(protocol),
                          std::move(structure)};
}

RunMetrics evaluate_model(const DcahModel& model, const ExperimentInputs& inputs,
                          std::uint64_t seed) {
  const PropagationOperator bop = bipartite_operator(inputs.structure);
  const PropagationOperator hop = hypergraph_operator(inputs.hypergraph);
  const DcahModel::Embeddings emb = model.embed(&bop, &hop);

  RunMetrics out;
  std::vector<RankedScores> pooled_ranked;
  for (int p = 0; p < kNumParts; ++p) {
    const auto& split = inputs.protocol.parts[static_cast<std::size_t>(p)];
    const auto& negs = inputs.protocol.test_negatives[static_cast<std::size_t>(p)];
    std::vector<RankedScores> ranked;
    PooledScores pooled;
    for (std::size_t k = 0; k < split.test.size(); ++k) {
      RankedScores rs;
      rs.positive = score_links(emb.queries, emb.items, {split.test[k]})[0];
      Vec ns = score_links(emb.queries, emb.items, negs[k]);
      rs.negatives.assign(ns.data(), ns.data() + ns.size());
      pooled.positives.push_back(rs.positive);
      pooled.negatives.insert(pooled.negatives.end(), rs.negatives.begin(),
                              rs.negatives.end());
      ranked.push_back(std::move(rs));
    }
    out.mrr[static_cast<std::size_t>(p)] = ranked.empty() ? 0.0 : mrr(ranked);
    out.recall[static_cast<std::size_t>(p)] =
        pooled.positives.empty() ? 0.0 : recall_at_n(pooled);
    pooled_ranked.insert(pooled_ranked.end(), ranked.begin(), ranked.end());
  }
  out.overall_mrr = pooled_ranked.empty() ? 0.0 : mrr(pooled_ranked);

  Rng rng_q(derive_seed(seed, "mad_query"));
  Rng rng_i(derive_seed(seed, "mad_item"));
  out.mad_query = mad(emb.queries, rng_q).value;
  out.mad_item = mad(emb.items, rng_i).value;
  return out;
}

RunOutput run_single(const ExperimentInputs& inputs, const ModeSpec& mode,
                     const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                     std::uint64_t seed) {
  ModelConfig mc = model_cfg;
  mc.mode = mode.model;
  TrainConfig tc = train_cfg;
  tc.seed = seed;
  if (!mode.ssl) tc.ssl_epochs = 0;
  if (!mode.dropedge) tc.dropedge_rate = 0.0;

  Rng rng_init(derive_seed(seed, "model_init"));
  DcahModel model =
      DcahModel::init(mc, inputs.query_features, inputs.graph.num_items(), rng_init);
  PipelineLog log =
      train_full(model, inputs.structure, inputs.hypergraph, inputs.protocol, tc);
  RunMetrics metrics = evaluate_model(model, inputs, seed);
  return RunOutput{metrics, std::move(log), std::move(model)};
}

MetricsReport run_experiment_matrix(const ExperimentInputs& inputs,
                                    const std::vector<ModeSpec>& modes,
                                    const ModelConfig& model_cfg,
                                    const TrainConfig& train_cfg,
                                    const std::vector<std::uint64_t>& seeds,
                                    int jobs) {
  struct Task {
    std::size_t mode_idx;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    for (std::uint64_t s : seeds) tasks.push_back({m, s});
  }
  std::vector<RunMetrics> results(tasks.size());
  std::vector<std::string> errors(tasks.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= tasks.size()) break;
      try {
        results[k] = run_single(inputs, modes[tasks[k].mode_idx], model_cfg,
                                train_cfg, tasks[k].seed)
                         .metrics;
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  const int n_threads = std::max(1, jobs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (!errors[k].empty()) {
      throw NumericError("run " + mode_string(modes[tasks[k].mode_idx]) + " seed " +
                         std::to_string(tasks[k].seed) + " failed: " + errors[k]);
    }
  }

  MetricsReport report;
  report.num_queries = inputs.graph.num_queries();
  report.num_items = inputs.graph.num_items();
  report.num_edges = static_cast<Index>(inputs.graph.edges().size());
  report.num_hyperedges = inputs.hypergraph.num_edges();
  report.density = inputs.graph.density();
  report.assortativity = degree_assortativity(inputs.graph);

  for (std::size_t m = 0; m < modes.size(); ++m) {
    ModeReport row;
    row.mode = mode_string(modes[m]);
    row.runs = static_cast<int>(seeds.size());
    std::array<std::vector<Real>, 4> mrrs, recalls;
    std::vector<Real> overall, madq, madi;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      if (tasks[k].mode_idx != m) continue;
      for (int p = 0; p < kNumParts; ++p) {
        mrrs[static_cast<std::size_t>(p)].push_back(results[k].mrr[static_cast<std::size_t>(p)]);
        recalls[static_cast<std::size_t>(p)].push_back(results[k].recall[static_cast<std::size_t>(p)]);
      }
      overall.push_back(results[k].overall_mrr);
      madq.push_back(results[k].mad_query);
      madi.push_back(results[k].mad_item);
    }
    for (int p = 0; p < kNumParts; ++p) {
      row.mrr[static_cast<std::size_t>(p)] = aggregate(mrrs[static_cast<std::size_t>(p)]);
      row.recall[static_cast<std::size_t>(p)] = aggregate(recalls[static_cast<std::size_t>(p)]);
    }
    row.overall_mrr = aggregate(overall);
    row.mad_query = aggregate(madq);
    row.mad_item = aggregate(madi);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace dcah
