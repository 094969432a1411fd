#pragma once

#include "dcah/common.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dcah {

struct Aggregate {
  Real mean = 0.0;
  Real stddev = 0.0;
};

Aggregate aggregate(const std::vector<Real>& values);

/// One experiment row: a (model, enhancement) mode averaged over seeds.
struct ModeReport {
  std::string mode;
  int runs = 0;
  std::array<Aggregate, 4> mrr;     // per part
  std::array<Aggregate, 4> recall;  // per part
  Aggregate overall_mrr;            // pooled over all test parts
  Aggregate mad_query;
  Aggregate mad_item;
};

struct MetricsReport {
  Index num_queries = 0;
  Index num_items = 0;
  Index num_edges = 0;
  Index num_hyperedges = 0;
  Real density = 0.0;
  std::optional<Real> assortativity;
  std::vector<ModeReport> rows;
};

void save_report_json(const MetricsReport& report, const std::string& path);
void save_report_text(const MetricsReport& report, const std::string& path);

}  // namespace dcah
