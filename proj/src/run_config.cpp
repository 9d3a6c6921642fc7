#include "rct/run_config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rct/errors.hpp"

namespace rct {

namespace {

void require_object(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
}

SplitFractions parse_split(const nlohmann::json& j) {
  require_object(j, "data.split");
  SplitFractions f;
  for (const auto& [key, value] : j.items()) {
    if (key == "train") {
      f.train = value.get<double>();
    } else if (key == "val") {
      f.val = value.get<double>();
    } else if (key == "test") {
      f.test = value.get<double>();
    } else {
      throw ValidationError("unknown key 'data.split." + key + "'");
    }
  }
  return f;
}

}  // namespace

FeatureSchema resolve_schema(const std::string& schema) {
  if (schema == kSynthStd) return synth_std_schema();
  return FeatureSchema::load(schema);
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  require_object(j, "run config");
  RunConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "schema") {
        c.schema = value.get<std::string>();
      } else if (key == "data") {
        require_object(value, "data");
        for (const auto& [dkey, dvalue] : value.items()) {
          if (dkey == "path") {
            c.data_path = dvalue.get<std::string>();
          } else if (dkey == "generator") {
            if (dvalue.is_string()) {
              if (dvalue.get<std::string>() != kSynthStd) {
                throw ValidationError("data.generator must be an object or \"synth-std\"");
              }
              c.generator = synth_std_config();
            } else {
              c.generator = GenConfig::from_json(dvalue);
            }
          } else if (dkey == "split") {
            c.split = parse_split(dvalue);
          } else if (dkey == "split_seed") {
            c.split_seed = dvalue.get<std::uint64_t>();
          } else if (dkey == "train_limit") {
            if (!dvalue.is_null()) c.train_limit = dvalue.get<std::size_t>();
          } else {
            throw ValidationError("unknown key 'data." + dkey + "'");
          }
        }
      } else if (key == "model") {
        c.model = ModelConfig::from_json(value);
      } else if (key == "train") {
        c.train = TrainConfig::from_json(value);
      } else if (key == "output") {
        c.output = value.get<std::string>();
      } else {
        throw ValidationError("unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::ordered_json split_to_json(const SplitFractions& f, std::uint64_t seed,
                                     const std::optional<std::size_t>& train_limit) {
  nlohmann::ordered_json j;
  j["split"] = {{"train", f.train}, {"val", f.val}, {"test", f.test}};
  j["split_seed"] = seed;
  j["train_limit"] = train_limit ? nlohmann::ordered_json(*train_limit) : nlohmann::ordered_json(nullptr);
  return j;
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = schema;
  nlohmann::ordered_json data;
  if (!data_path.empty()) data["path"] = data_path;
  if (generator) data["generator"] = generator->to_json();
  for (auto& [k, v] : split_to_json(split, split_seed, train_limit).items()) data[k] = v;
  j["data"] = std::move(data);
  j["model"] = model.to_json();
  j["train"] = train.to_json();
  j["output"] = output;
  return j;
}

void RunConfig::validate(bool check_paths) const {
  model.validate();
  train.validate();
  for (double f : {split.train, split.val, split.test}) {
    if (!(f > 0.0)) throw ValidationError("data.split fractions must be positive");
  }
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    throw ValidationError("data.split fractions must sum to 1");
  }
  if (train_limit && *train_limit == 0) throw ValidationError("data.train_limit must be positive");
  if (data_path.empty() && !generator) throw ValidationError("data needs a path or a generator");
  if (!data_path.empty() && generator) throw ValidationError("data takes either a path or a generator, not both");
  if (check_paths) {
    if (schema != kSynthStd && !std::filesystem::exists(schema)) {
      throw ValidationError("schema file " + schema + " does not exist");
    }
    if (!data_path.empty() && !std::filesystem::exists(data_path)) {
      throw ValidationError("data file " + data_path + " does not exist");
    }
  }
}

FeatureSchema RunConfig::load_schema() const { return resolve_schema(schema); }

Dataset RunConfig::load_data(const FeatureSchema& schema_in) const {
  if (!data_path.empty()) return load_dataset(data_path, schema_in);
  if (!generator) throw ValidationError("data needs a path or a generator");
  return generate(*generator, schema_in);
}

}  // namespace rct
