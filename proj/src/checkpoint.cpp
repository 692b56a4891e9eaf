#include "occbranch/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "occbranch/config.hpp"
#include "occbranch/error.hpp"

namespace occbranch::checkpoint {

using nlohmann::json;

namespace {

template <typename U>
void put(std::ofstream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::ifstream& is, const std::filesystem::path& path) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated checkpoint " + path.string());
  return v;
}

void put_floats(std::ofstream& os, const std::vector<float>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void get_floats(std::ifstream& is, std::vector<float>& v, const std::filesystem::path& path) {
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)))) {
    throw IoError("truncated checkpoint " + path.string());
  }
}

json history_json(const History& history) {
  json arr = json::array();
  for (const auto& h : history) {
    arr.push_back({{"epoch", h.epoch},
                   {"train_loss", h.train_loss},
                   {"val_loss", std::isfinite(h.val_loss) ? json(h.val_loss) : json(nullptr)}});
  }
  return arr;
}

History history_from_json(const json& arr) {
  History out;
  for (const auto& h : arr) {
    EpochRecord r;
    r.epoch = h.at("epoch").get<int>();
    r.train_loss = h.at("train_loss").get<double>();
    r.val_loss = h.at("val_loss").is_null() ? std::numeric_limits<double>::quiet_NaN() : h.at("val_loss").get<double>();
    out.push_back(r);
  }
  return out;
}

void write_file(const std::filesystem::path& path, json header, const std::vector<nn::Param<float>*>& params,
                nn::Adam<float>& adam) {
  json tensors = json::array();
  for (auto* p : params) tensors.push_back({{"name", p->name}, {"shape", p->shape}, {"size", p->size()}});
  header["tensors"] = tensors;
  header["adam_step"] = adam.step_count();
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_floats(os, params[i]->value);
    put_floats(os, adam.first_moments()[i]);
    put_floats(os, adam.second_moments()[i]);
  }
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

json read_header(std::ifstream& is, const std::filesystem::path& path) {
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(is, path);
  if (len > (1u << 26)) throw IoError("checkpoint header too large in " + path.string());
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw IoError("truncated checkpoint " + path.string());
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
}

void read_tensors(std::ifstream& is, const json& header, const std::vector<nn::Param<float>*>& params,
                  nn::Adam<float>& adam, const std::filesystem::path& path) {
  const json& tensors = header.at("tensors");
  if (tensors.size() != params.size()) throw IoError("tensor count mismatch in " + path.string());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[i].at("name").get<std::string>() != params[i]->name ||
        tensors[i].at("size").get<std::size_t>() != params[i]->size()) {
      throw IoError("tensor " + params[i]->name + " does not match " + path.string());
    }
    get_floats(is, params[i]->value, path);
    get_floats(is, adam.first_moments()[i], path);
    get_floats(is, adam.second_moments()[i], path);
  }
  adam.set_step_count(header.at("adam_step").get<std::int64_t>());
  char extra;
  if (is.read(&extra, 1)) throw IoError("trailing bytes in checkpoint " + path.string());
}

void fill_info(const json& header, Loaded* info) {
  if (!info) return;
  info->model = header.at("model").get<std::string>();
  info->train = train_config_from_json(header.at("train"));
  info->history = history_from_json(header.at("history"));
  info->best_epoch = header.at("best_epoch").get<int>();
}

json base_header(const std::string& model, const TrainConfig& train, const History& history, int best_epoch) {
  return {{"format", "occbranch-checkpoint"},
          {"model", model},
          {"train", to_json(train)},
          {"history", history_json(history)},
          {"best_epoch", best_epoch}};
}

void expect_model(const json& header, const std::string& model, const std::filesystem::path& path) {
  const std::string got = header.at("model").get<std::string>();
  if (got != model) throw SpecMismatch(path.string() + " holds a '" + got + "' model, expected '" + model + "'");
}

}  // namespace

void save(const std::filesystem::path& path, regressor::ModelState<float>& state, const TrainConfig& train,
          const History& history, int best_epoch) {
  json header = base_header("hob", train, history, best_epoch);
  header["spec"] = to_json(state.net->spec());
  write_file(path, header, state.net->params(), state.adam);
}

void save(const std::filesystem::path& path, seg::SegModelState<float>& state, const TrainConfig& train,
          const History& history, int best_epoch) {
  json header = base_header("seg", train, history, best_epoch);
  header["spec"] = to_json(state.net->spec());
  write_file(path, header, state.net->params(), state.adam);
}

regressor::ModelState<float> load_regressor(const std::filesystem::path& path, Loaded* info) {
  std::ifstream is(path, std::ios::binary);
  const json header = read_header(is, path);
  try {
    expect_model(header, "hob", path);
    const TrainConfig train = train_config_from_json(header.at("train"));
    regressor::ModelState<float> state(model_spec_from_json(header.at("spec")), train.adam());
    read_tensors(is, header, state.net->params(), state.adam, path);
    fill_info(header, info);
    return state;
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
}

seg::SegModelState<float> load_segmodel(const std::filesystem::path& path, Loaded* info) {
  std::ifstream is(path, std::ios::binary);
  const json header = read_header(is, path);
  try {
    expect_model(header, "seg", path);
    const TrainConfig train = train_config_from_json(header.at("train"));
    seg::SegModelState<float> state(seg_spec_from_json(header.at("spec")), train.adam());
    read_tensors(is, header, state.net->params(), state.adam, path);
    fill_info(header, info);
    return state;
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
}

}  // namespace occbranch::checkpoint
