#include "rct/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include "rct/errors.hpp"

namespace rct {

std::string_view to_string(SweepKind k) {
  switch (k) {
    case SweepKind::heads:
      return "heads";
    case SweepKind::layers:
      return "layers";
    case SweepKind::datascale:
      return "datascale";
  }
  return "unknown";
}

SweepKind parse_sweep_kind(std::string_view s) {
  if (s == "heads") return SweepKind::heads;
  if (s == "layers") return SweepKind::layers;
  if (s == "datascale") return SweepKind::datascale;
  throw ValidationError("unknown sweep kind '" + std::string(s) + "' (expected heads, layers or datascale)");
}

void SweepSpec::validate() const {
  if (values.empty()) throw ValidationError("sweep needs at least one value");
  if (seeds.empty()) throw ValidationError("sweep needs at least one seed");
  model.validate();
  train.validate();
  for (std::int64_t v : values) {
    if (std::count(values.begin(), values.end(), v) > 1) {
      throw ValidationError("sweep value " + std::to_string(v) + " listed twice");
    }
    if (v <= 0) throw ValidationError("sweep value " + std::to_string(v) + " must be positive");
    if (kind == SweepKind::heads && model.d_model % v != 0) {
      throw ValidationError("sweep: " + std::to_string(v) + " heads do not divide d_model " +
                            std::to_string(model.d_model));
    }
  }
}

SweepSummary summarize(std::int64_t value, const std::vector<double>& scores) {
  SweepSummary s;
  s.value = value;
  if (scores.empty()) return s;
  double sum = 0.0;
  for (double x : scores) sum += x;
  s.mean = sum / static_cast<double>(scores.size());
  if (scores.size() > 1) {
    double ss = 0.0;
    for (double x : scores) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(scores.size() - 1));
  }
  return s;
}

void SweepReport::write_csv(std::ostream& out) const {
  out << "kind,value,seed,test_mae_percent,std\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  std::size_t c = 0;
  for (const auto& s : summaries) {
    for (; c < cells.size() && cells[c].value == s.value; ++c) {
      out << to_string(kind) << ',' << cells[c].value << ',' << cells[c].seed << ',' << num(cells[c].test_mae_percent)
          << ",\n";
    }
    out << to_string(kind) << ',' << s.value << ",summary," << num(s.mean) << ',' << num(s.std) << '\n';
  }
}

void SweepReport::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_csv(out);
}

unsigned sweep_threads() {
  if (const char* env = std::getenv("RCT_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

SweepReport run_sweep(const SweepSpec& spec, const Dataset& raw, unsigned threads) {
  spec.validate();
  SweepReport report;
  report.kind = spec.kind;
  for (std::int64_t v : spec.values) {
    for (std::uint64_t s : spec.seeds) report.cells.push_back(SweepCell{v, s, 0.0});
  }

  // Data preparation depends only on the value for datascale and is shared
  // otherwise.
  std::optional<PreparedData> shared;
  if (spec.kind != SweepKind::datascale) shared = prepare_data(raw, spec.fractions, spec.split_seed);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&]() {
    for (std::size_t i = next++; i < report.cells.size(); i = next++) {
      try {
        SweepCell& cell = report.cells[i];
        ModelConfig model = spec.model;
        TrainConfig train = spec.train;
        train.seed = cell.seed;
        if (spec.kind == SweepKind::heads) model.heads = static_cast<int>(cell.value);
        if (spec.kind == SweepKind::layers) model.layers = static_cast<int>(cell.value);
        if (shared) {
          cell.test_mae_percent = run_experiment(*shared, model, train).test_mae_percent;
        } else {
          const PreparedData data =
              prepare_data(raw, spec.fractions, spec.split_seed, static_cast<std::size_t>(cell.value));
          cell.test_mae_percent = run_experiment(data, model, train).test_mae_percent;
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(report.cells.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  for (std::int64_t v : spec.values) {
    std::vector<double> scores;
    for (const auto& c : report.cells) {
      if (c.value == v) scores.push_back(c.test_mae_percent);
    }
    report.summaries.push_back(summarize(v, scores));
  }
  return report;
}

}  // namespace rct
