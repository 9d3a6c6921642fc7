#pragma once

// Attention-importance heat maps and pooled-embedding export.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rct/dataset.hpp"
#include "rct/embeddings.hpp"
#include "rct/model.hpp"

namespace rct {

// Rows are token positions, columns are heads; each column is min-max
// normalized (a constant column becomes all zeros).
struct HeatMap {
  std::vector<std::string> labels;
  Eigen::MatrixXd values;

  // Header "token,head_0,...", one row per label.
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;
};

// The k largest entries (i, j) of an attention map, largest first; equal
// values are ordered by (i, j). k is clamped to the number of entries.
std::vector<std::pair<Index, Index>> top_interactions(const Eigen::MatrixXd& scores, std::size_t k);

// Adds 1 to counters[j] for every (i, j) among the top-k entries.
void count_top_interactions(const Eigen::MatrixXd& scores, std::size_t k, Eigen::VectorXd& counters);

// (c - min) / (max - min), or all zeros when max == min.
Eigen::VectorXd minmax_normalize(const Eigen::VectorXd& counters);

// counters: tokens x heads.
HeatMap heatmap_from_counters(const Eigen::MatrixXd& counters, std::vector<std::string> labels);

// "dimension.weight", ..., "item_0", "charge_0", ..., "heuristic".
std::vector<std::string> token_labels(const FeatureSchema& schema, const RateCard& card, const TokenLayout& layout = {});

// Raw per-head counters of the top-k interactions of one encoder layer over
// every record (tokens x heads). layer < 0 selects the last layer. Requires a
// transformer over the full card and records that all share one sequence
// length.
Eigen::MatrixXd importance_counters(const Regressor<float>& model, const Dataset& ds, int layer, std::size_t top_k);

HeatMap attention_importance(const Regressor<float>& model, const Dataset& ds, int layer = -1, std::size_t top_k = 5);

// Pooled representation feeding each record's regression head
// (records x width).
Eigen::MatrixXd pooled_embeddings(const Regressor<float>& model, const Dataset& ds, std::size_t batch_size = 512);

// CSV: index, emb_0..emb_{w-1}, actual_cost, heuristic_cost.
void export_embeddings(const Regressor<float>& model, const Dataset& ds, std::ostream& out);
void export_embeddings(const Regressor<float>& model, const Dataset& ds, const std::string& path);

}  // namespace rct
