#pragma once

// Ablation sweeps over head count, layer depth or training-set size.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "rct/experiment.hpp"

namespace rct {

enum class SweepKind { heads, layers, datascale };

std::string_view to_string(SweepKind k);
SweepKind parse_sweep_kind(std::string_view s);

struct SweepSpec {
  SweepKind kind = SweepKind::heads;
  std::vector<std::int64_t> values;
  std::vector<std::uint64_t> seeds;
  ModelConfig model;
  TrainConfig train;
  SplitFractions fractions;
  std::uint64_t split_seed = 0;

  // Rejects empty lists, head counts not dividing d_model, non-positive
  // depths and training sizes.
  void validate() const;
};

struct SweepCell {
  std::int64_t value = 0;
  std::uint64_t seed = 0;
  double test_mae_percent = 0.0;
};

struct SweepSummary {
  std::int64_t value = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds; 0 for one seed
};

struct SweepReport {
  SweepKind kind = SweepKind::heads;
  std::vector<SweepCell> cells;  // value-major, seeds in spec order
  std::vector<SweepSummary> summaries;

  // Header kind,value,seed,test_mae_percent,std. Cell rows leave std empty;
  // each value closes with a row whose seed is "summary" holding the mean
  // and standard deviation.
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;
};

// Worker count: RCT_THREADS if set (>= 1), otherwise the hardware
// concurrency.
unsigned sweep_threads();

// Trains one model per (value, seed) with train.seed = seed. d_model stays
// fixed in a heads sweep. Cells run in parallel; results do not depend on
// scheduling.
SweepReport run_sweep(const SweepSpec& spec, const Dataset& raw, unsigned threads = sweep_threads());

SweepSummary summarize(std::int64_t value, const std::vector<double>& scores);

}  // namespace rct
