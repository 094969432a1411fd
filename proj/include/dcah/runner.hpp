#pragma once

#include "dcah/datagen.hpp"
#include "dcah/report.hpp"
#include "dcah/train.hpp"

#include <array>
#include <string>
#include <vector>

namespace dcah {

/// A row of the experiment matrix: encoder ablation plus training
/// enhancements. Canonical strings look like "dcah+ssl+dropedge".
struct ModeSpec {
  ModelMode model = ModelMode::dcah;
  bool ssl = false;
  bool dropedge = false;
};

ModeSpec parse_mode_spec(const std::string& s);
std::string mode_string(const ModeSpec& m);
std::vector<ModeSpec> full_mode_matrix();  // 3 models x 4 enhancement combos

/// Immutable world shared by every run: the generated (or loaded) graphs,
/// the frozen split protocol, fixed query features, and the training
/// structure graph (train edges plus excluded-part edges; validation and
/// test edges never appear in any propagation operator).
struct ExperimentInputs {
  BipartiteGraph graph;
  Hypergraph hypergraph;
  Mat query_features;
  EvalProtocol protocol;
  BipartiteGraph structure;
};

ExperimentInputs make_inputs(BipartiteGraph graph, Hypergraph hypergraph,
                             Mat query_features, EvalProtocol protocol);

struct RunMetrics {
  std::array<Real, 4> mrr{};
  std::array<Real, 4> recall{};
  Real overall_mrr = 0.0;
  Real mad_query = 0.0;
  Real mad_item = 0.0;
};

/// Scores a trained model against the protocol's test edges and negatives.
RunMetrics evaluate_model(const DcahModel& model, const ExperimentInputs& inputs,
                          std::uint64_t seed);

/// Full pipeline for one (mode, seed): init, optional SSL pretraining,
/// supervised training, test-time evaluation and smoothness diagnostics.
struct RunOutput {
  RunMetrics metrics;
  PipelineLog log;
  DcahModel model;
};
RunOutput run_single(const ExperimentInputs& inputs, const ModeSpec& mode,
                     const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                     std::uint64_t seed);

/// Runs every requested mode over every seed and aggregates mean/std rows.
/// `jobs` > 1 distributes seeds across threads; outputs are independent of
/// the thread count.
MetricsReport run_experiment_matrix(const ExperimentInputs& inputs,
                                    const std::vector<ModeSpec>& modes,
                                    const ModelConfig& model_cfg,
                                    const TrainConfig& train_cfg,
                                    const std::vector<std::uint64_t>& seeds,
                                    int jobs = 1);

}  // namespace dcah
