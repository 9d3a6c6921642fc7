#include "rct/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "rct/errors.hpp"

namespace rct {

namespace {

constexpr char kMagic[8] = {'R', 'C', 'T', 'C', 'K', 'P', 'T', '\0'};
constexpr char kEnd[8] = {'R', 'C', 'T', 'E', 'N', 'D', '\0', '\0'};
constexpr std::uint8_t kFloat32 = 1;

template <typename V>
void put(std::string& buf, V v) {
  char bytes[sizeof(V)];
  std::memcpy(bytes, &v, sizeof(V));
  buf.append(bytes, sizeof(V));
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

  template <typename V>
  V get(const char* what) {
    V v;
    std::memcpy(&v, take(sizeof(V), what), sizeof(V));
    return v;
  }

  const char* take(std::size_t n, const char* what) {
    if (n > data_.size() - pos_) {
      throw ParseError(path_ + ": truncated checkpoint while reading " + what);
    }
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool at_end() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Regressor<float>& model, const std::string& path, const nlohmann::ordered_json& run) {
  nlohmann::ordered_json header;
  header["model"] = model.config().to_json();
  header["schema"] = model.schema().to_json();
  header["preprocess"] = model.preprocess() ? model.preprocess()->to_json() : nlohmann::ordered_json(nullptr);
  header["run"] = run;
  const std::string text = header.dump();

  std::string buf(kMagic, sizeof kMagic);
  put<std::uint32_t>(buf, kCheckpointVersion);
  put<std::uint64_t>(buf, text.size());
  buf += text;
  const ParameterStore<float>& params = model.parameters();
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter<float>& p = params[i];
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(p.name.size()));
    buf += p.name;
    put<std::uint8_t>(buf, kFloat32);
    put<std::int64_t>(buf, p.value.rows());
    put<std::int64_t>(buf, p.value.cols());
    buf.append(reinterpret_cast<const char*>(p.value.data()), static_cast<std::size_t>(p.value.size()) * sizeof(float));
  }
  buf.append(kEnd, sizeof kEnd);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, const std::optional<FeatureSchema>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(data, path);

  if (std::memcmp(r.take(sizeof kMagic, "magic"), kMagic, sizeof kMagic) != 0) {
    throw ParseError(path + ": not a checkpoint file");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CompatibilityError(path + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = r.get<std::uint64_t>("header length");
  const char* header_text = r.take(header_len, "header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text, header_text + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad checkpoint header: " + e.what());
  }

  FeatureSchema schema;
  ModelConfig config;
  std::shared_ptr<const PreprocessState> preprocess;
  try {
    schema = FeatureSchema::from_json(header.at("schema"));
    config = ModelConfig::from_json(header.at("model"));
    if (!header.at("preprocess").is_null()) {
      preprocess = std::make_shared<PreprocessState>(PreprocessState::from_json(header.at("preprocess")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad checkpoint header: " + e.what());
  }
  if (expected && !(*expected == schema)) {
    throw CompatibilityError(path + ": checkpoint was trained under a different feature schema");
  }

  auto model = build_model<float>(schema, config, preprocess, 0);
  ParameterStore<float>& params = model->parameters();
  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != params.size()) {
    throw CompatibilityError(path + ": checkpoint holds " + std::to_string(count) + " tensors, architecture expects " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    Parameter<float>& p = params[i];
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    const std::string name(r.take(name_len, "tensor name"), name_len);
    const auto dtype = r.get<std::uint8_t>("tensor dtype");
    const auto rows = r.get<std::int64_t>("tensor rows");
    const auto cols = r.get<std::int64_t>("tensor cols");
    if (name != p.name || dtype != kFloat32 || rows != p.value.rows() || cols != p.value.cols()) {
      throw CompatibilityError(path + ": tensor '" + name + "' " + shape_string(rows, cols) +
                               " does not match expected '" + p.name + "' " + shape_string(p.value));
    }
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(float);
    std::memcpy(p.value.data(), r.take(bytes, "tensor data"), bytes);
  }
  if (std::memcmp(r.take(sizeof kEnd, "end marker"), kEnd, sizeof kEnd) != 0 || !r.at_end()) {
    throw ParseError(path + ": corrupt checkpoint trailer");
  }
  return LoadedCheckpoint{std::move(model), header.value("run", nlohmann::json::object())};
}

}  // namespace rct
