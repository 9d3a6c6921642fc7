#include "rct/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "rct/errors.hpp"

namespace rct {

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

const RctModel<float>& require_transformer(const Regressor<float>& model) {
  const auto* rct = dynamic_cast<const RctModel<float>*>(&model);
  if (rct == nullptr) {
    throw ValidationError("attention importance needs a transformer over the rate card (model kind '" +
                          std::string(to_string(model.config().kind)) + "')");
  }
  return *rct;
}

}  // namespace

void HeatMap::write_csv(std::ostream& out) const {
  out << "token";
  for (Index h = 0; h < values.cols(); ++h) out << ",head_" << h;
  out << '\n';
  for (Index r = 0; r < values.rows(); ++r) {
    out << labels[static_cast<std::size_t>(r)];
    for (Index h = 0; h < values.cols(); ++h) out << ',' << format_number(values(r, h));
    out << '\n';
  }
}

void HeatMap::write_csv(const std::string& path) const {
  auto out = open_output(path);
  write_csv(out);
}

std::vector<std::pair<Index, Index>> top_interactions(const Eigen::MatrixXd& scores, std::size_t k) {
  std::vector<std::pair<Index, Index>> cells;
  cells.reserve(static_cast<std::size_t>(scores.size()));
  for (Index i = 0; i < scores.rows(); ++i) {
    for (Index j = 0; j < scores.cols(); ++j) cells.emplace_back(i, j);
  }
  k = std::min(k, cells.size());
  auto before = [&](const std::pair<Index, Index>& a, const std::pair<Index, Index>& b) {
    const double va = scores(a.first, a.second), vb = scores(b.first, b.second);
    if (va != vb) return va > vb;
    return a < b;
  };
  std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(k), cells.end(), before);
  cells.resize(k);
  return cells;
}

void count_top_interactions(const Eigen::MatrixXd& scores, std::size_t k, Eigen::VectorXd& counters) {
  if (counters.size() != scores.cols()) {
    throw ShapeError("count_top_interactions: " + std::to_string(counters.size()) + " counters for a " +
                     shape_string(scores.rows(), scores.cols()) + " map");
  }
  for (const auto& [i, j] : top_interactions(scores, k)) counters(j) += 1.0;
}

Eigen::VectorXd minmax_normalize(const Eigen::VectorXd& counters) {
  if (counters.size() == 0) return counters;
  const double lo = counters.minCoeff(), hi = counters.maxCoeff();
  if (hi == lo) return Eigen::VectorXd::Zero(counters.size());
  return (counters.array() - lo) / (hi - lo);
}

HeatMap heatmap_from_counters(const Eigen::MatrixXd& counters, std::vector<std::string> labels) {
  if (static_cast<Index>(labels.size()) != counters.rows()) {
    throw ShapeError("heatmap: " + std::to_string(labels.size()) + " labels for " + std::to_string(counters.rows()) +
                     " token rows");
  }
  HeatMap hm;
  hm.labels = std::move(labels);
  hm.values.resize(counters.rows(), counters.cols());
  for (Index h = 0; h < counters.cols(); ++h) hm.values.col(h) = minmax_normalize(counters.col(h));
  return hm;
}

std::vector<std::string> token_labels(const FeatureSchema& schema, const RateCard& card, const TokenLayout& layout) {
  std::vector<std::string> labels;
  if (layout.fixed) {
    for (GroupId g : kFixedGroups) {
      for (const auto& f : schema.group(g)) labels.push_back(std::string(group_name(g)) + "." + f.name);
    }
  }
  if (layout.variable) {
    for (std::size_t k = 0; k < card.items.size(); ++k) labels.push_back("item_" + std::to_string(k));
    for (std::size_t k = 0; k < card.charges.size(); ++k) labels.push_back("charge_" + std::to_string(k));
  }
  if (layout.heuristic) labels.push_back("heuristic");
  return labels;
}

Eigen::MatrixXd importance_counters(const Regressor<float>& model, const Dataset& ds, int layer, std::size_t top_k) {
  const RctModel<float>& rct = require_transformer(model);
  if (ds.size() == 0) throw ValidationError("attention importance: dataset is empty");
  const Index layers = static_cast<Index>(rct.encoder().blocks.size());
  const Index l = layer < 0 ? layers - 1 : layer;
  if (l < 0 || l >= layers) {
    throw ValidationError("attention importance: layer " + std::to_string(layer) + " out of range for " +
                          std::to_string(layers) + " layers");
  }
  const Index length = RateCardEmbedder<float>::sequence_length(model.schema(), ds.records[0], rct.layout());
  for (std::size_t r = 1; r < ds.size(); ++r) {
    if (RateCardEmbedder<float>::sequence_length(model.schema(), ds.records[r], rct.layout()) != length) {
      throw ValidationError(
          "attention importance needs a fixed sequence length, but records 0 and " + std::to_string(r) +
          " differ (items/charges " + std::to_string(ds.records[0].items.size()) + "/" +
          std::to_string(ds.records[0].charges.size()) + " vs " + std::to_string(ds.records[r].items.size()) + "/" +
          std::to_string(ds.records[r].charges.size()) +
          "); filter the data to one stratum of item and charge counts (analyze --stratum ITEMS,CHARGES)");
    }
  }
  const Index heads = rct.config().heads;
  Eigen::MatrixXd counters = Eigen::MatrixXd::Zero(length, heads);
  std::vector<AttentionProbs<float>> probs;
  ForwardContext<float> ctx;
  ctx.attention = &probs;
  std::vector<const RateCard*> batch;
  Eigen::VectorXd column(length);
  for (std::size_t start = 0; start < ds.size(); start += 256) {
    const std::size_t end = std::min(ds.size(), start + 256);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(&ds.records[i]);
    Graph<float> g(false);
    rct.predict(g, batch, ctx);
    const AttentionProbs<float>& maps = probs[static_cast<std::size_t>(l)];
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (Index h = 0; h < heads; ++h) {
        column = counters.col(h);
        count_top_interactions(maps.at(b, static_cast<std::size_t>(h)).cast<double>(), top_k, column);
        counters.col(h) = column;
      }
    }
  }
  return counters;
}

HeatMap attention_importance(const Regressor<float>& model, const Dataset& ds, int layer, std::size_t top_k) {
  const Eigen::MatrixXd counters = importance_counters(model, ds, layer, top_k);
  const RctModel<float>& rct = require_transformer(model);
  return heatmap_from_counters(counters, token_labels(model.schema(), ds.records[0], rct.layout()));
}

Eigen::MatrixXd pooled_embeddings(const Regressor<float>& model, const Dataset& ds, std::size_t batch_size) {
  if (!ds.encoded()) throw StateError("dataset is not preprocessed; apply the model's preprocessing first");
  Eigen::MatrixXd out;
  Tensor<float> pooled;
  ForwardContext<float> ctx;
  ctx.pooled = &pooled;
  std::vector<const RateCard*> batch;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t end = std::min(ds.size(), start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(&ds.records[i]);
    Graph<float> g(false);
    model.predict(g, batch, ctx);
    if (out.size() == 0) out.resize(static_cast<Index>(ds.size()), pooled.cols());
    out.middleRows(static_cast<Index>(start), pooled.rows()) = pooled.cast<double>();
  }
  return out;
}

void export_embeddings(const Regressor<float>& model, const Dataset& ds, std::ostream& out) {
  const Eigen::MatrixXd emb = pooled_embeddings(model, ds);
  out << "index";
  for (Index c = 0; c < emb.cols(); ++c) out << ",emb_" << c;
  out << ",actual_cost,heuristic_cost\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    out << r;
    for (Index c = 0; c < emb.cols(); ++c) out << ',' << format_number(emb(static_cast<Index>(r), c));
    const RateCard& card = ds.records[r];
    out << ',' << (card.actual_cost ? format_number(*card.actual_cost) : std::string()) << ','
        << format_number(card.heuristic_cost) << '\n';
  }
}

void export_embeddings(const Regressor<float>& model, const Dataset& ds, const std::string& path) {
  auto out = open_output(path);
  export_embeddings(model, ds, out);
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace rct
