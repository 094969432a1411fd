#include "dcah/report.hpp"

#include "dcah/eval.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace dcah {

using json = nlohmann::ordered_json;

Aggregate aggregate(const std::vector<Real>& values) {
  Aggregate a;
  if (values.empty()) return a;
  for (Real v : values) a.mean += v;
  a.mean /= static_cast<Real>(values.size());
  if (values.size() > 1) {
    Real ss = 0.0;
    for (Real v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<Real>(values.size() - 1));
  }
  return a;
}

namespace {

json agg_to_json(const Aggregate& a) {
  return json{{"mean", a.mean}, {"std", a.stddev}};
}

}  // namespace

void save_report_json(const MetricsReport& report, const std::string& path) {
  json j;
  j["dataset"] = {{"num_queries", report.num_queries},
                  {"num_items", report.num_items},
                  {"num_edges", report.num_edges},
                  {"num_hyperedges", report.num_hyperedges},
                  {"density", report.density},
                  {"degree_assortativity",
                   report.assortativity ? json(*report.assortativity) : json(nullptr)}};
  json rows = json::array();
  for (const ModeReport& row : report.rows) {
    json r;
    r["mode"] = row.mode;
    r["runs"] = row.runs;
    for (int p = 0; p < kNumParts; ++p) {
      r["parts"][part_name(p)] = {
          {"mrr", agg_to_json(row.mrr[static_cast<std::size_t>(p)])},
          {"recall", agg_to_json(row.recall[static_cast<std::size_t>(p)])}};
    }
    r["overall_mrr"] = agg_to_json(row.overall_mrr);
    r["mad"] = {{"query", agg_to_json(row.mad_query)},
                {"item", agg_to_json(row.mad_item)}};
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("report: cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

void save_report_text(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("report: cannot open for writing: " + path);

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "dataset: %lld queries, %lld items, %lld edges, %lld hyperedges\n",
                static_cast<long long>(report.num_queries),
                static_cast<long long>(report.num_items),
                static_cast<long long>(report.num_edges),
                static_cast<long long>(report.num_hyperedges));
  out << buf;
  std::snprintf(buf, sizeof(buf), "density: %.3e   degree assortativity: ", report.density);
  out << buf;
  if (report.assortativity) {
    std::snprintf(buf, sizeof(buf), "%.4f\n\n", *report.assortativity);
  } else {
    std::snprintf(buf, sizeof(buf), "undefined (zero degree variance)\n\n");
  }
  out << buf;

  std::snprintf(buf, sizeof(buf), "%-26s %-13s %-13s %-13s %-13s %-13s %-13s %-13s %-13s\n",
                "mode", "head MRR", "head R@N", "tail1 MRR", "tail1 R@N",
                "tail2 MRR", "tail2 R@N", "isol MRR", "isol R@N");
  out << buf;
  for (const ModeReport& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-26s", row.mode.c_str());
    std::string line(buf);
    for (int p = 0; p < kNumParts; ++p) {
      char cell[64];
      std::snprintf(cell, sizeof(cell), " %6.2f+-%-5.2f",
                    100.0 * row.mrr[static_cast<std::size_t>(p)].mean,
                    100.0 * row.mrr[static_cast<std::size_t>(p)].stddev);
      line += cell;
      std::snprintf(cell, sizeof(cell), " %6.2f+-%-5.2f",
                    100.0 * row.recall[static_cast<std::size_t>(p)].mean,
                    100.0 * row.recall[static_cast<std::size_t>(p)].stddev);
      line += cell;
    }
    out << line << '\n';
  }
  out << '\n';
  std::snprintf(buf, sizeof(buf), "%-26s %-14s %-14s %-14s\n", "mode", "overall MRR",
                "MAD query", "MAD item");
  out << buf;
  for (const ModeReport& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-26s %6.2f+-%-5.2f %6.4f         %6.4f\n",
                  row.mode.c_str(), 100.0 * row.overall_mrr.mean,
                  100.0 * row.overall_mrr.stddev, row.mad_query.mean,
                  row.mad_item.mean);
    out << buf;
  }
}

}  // namespace dcah
