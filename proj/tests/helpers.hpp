#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "rct/dataset.hpp"
#include "rct/experiment.hpp"
#include "rct/model.hpp"
#include "rct/preprocess.hpp"
#include "rct/synthgen.hpp"

namespace testing {

inline rct::GenConfig small_config(std::size_t n, std::uint64_t seed = 3) {
  rct::GenConfig c = rct::synth_std_config();
  c.n_records = n;
  c.seed = seed;
  return c;
}

// Generated records, preprocessing fit on all of them, and the encoded set.
struct Encoded {
  rct::Dataset raw;
  std::shared_ptr<const rct::PreprocessState> state;
  rct::Dataset ds;
};

inline Encoded encoded_sample(std::size_t n, std::uint64_t seed = 3) {
  Encoded e;
  e.raw = rct::generate(small_config(n, seed), rct::synth_std_schema());
  e.state = std::make_shared<const rct::PreprocessState>(rct::fit_preprocess(e.raw));
  e.ds = rct::apply_preprocess(e.raw, e.state);
  return e;
}

inline rct::ModelConfig tiny_model(rct::ModelKind kind = rct::ModelKind::rct, int d = 8, int layers = 1, int heads = 2) {
  rct::ModelConfig m;
  m.kind = kind;
  m.d_model = d;
  m.layers = layers;
  m.heads = heads;
  m.ff_width = 4 * d;
  return m;
}

// Fills every parameter with N(0, std) so that no structure (zero biases,
// unit gains) hides a gradient error.
template <typename T>
void randomize(rct::ParameterStore<T>& store, std::uint64_t seed, double std = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, std);
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& v = store[i].value;
    for (rct::Index k = 0; k < v.size(); ++k) v.data()[k] = static_cast<T>(n(rng));
  }
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("rct_test_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testing
