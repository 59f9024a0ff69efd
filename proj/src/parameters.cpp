#include "catrinet/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "catrinet/errors.hpp"

namespace catrinet {

using nlohmann::json;

Tensor& ParameterStore::add(const std::string& name, Shape shape, Init init,
                            std::mt19937_64& rng) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  auto t = std::make_unique<Tensor>(shape);
  switch (init) {
    case Init::zeros:
      break;
    case Init::ones:
      t->fill(1.0);
      break;
    case Init::xavier_uniform: {
      const std::size_t fan_out = t->cols();
      const std::size_t fan_in = t->size() / std::max<std::size_t>(fan_out, 1);
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& v : t->values()) v = dist(rng);
      break;
    }
    case Init::uniform_small: {
      std::uniform_real_distribution<double> dist(-0.1, 0.1);
      for (double& v : t->values()) v = dist(rng);
      break;
    }
  }
  t->set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(t));
  return *entries_.back().second;
}

Tensor& ParameterStore::add_buffer(const std::string& name, Shape shape) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::make_unique<Tensor>(std::move(shape)));
  return *entries_.back().second;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return *entries_[it->second].second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return *entries_[it->second].second;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_)
    if (t->requires_grad()) n += t->size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : entries_) t->zero_grad();
}

namespace {

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  std::filesystem::path p = stem;
  p += ext;
  return p;
}

void put_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  os.write(buf, 8);
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& stem,
                     const std::string& extra_json) {
  json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["blob"] = with_ext(stem, ".bin").filename().string();
  json entries = json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Tensor& t = store.at(i);
    entries.push_back({{"name", store.name(i)},
                       {"shape", t.shape()},
                       {"offset", offset},
                       {"trainable", t.requires_grad()}});
    offset += 8 * t.size();
  }
  manifest["params"] = std::move(entries);
  manifest["meta"] = json::parse(extra_json);

  std::ofstream bin(with_ext(stem, ".bin"), std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot write " + with_ext(stem, ".bin").string());
  for (std::size_t i = 0; i < store.size(); ++i)
    for (double v : store.at(i).values()) put_le(bin, v);

  std::ofstream js(with_ext(stem, ".json"), std::ios::trunc);
  if (!js) throw IoError("cannot write " + with_ext(stem, ".json").string());
  js << manifest.dump(2) << '\n';
}

std::string load_checkpoint(ParameterStore& store, const std::filesystem::path& stem) {
  std::ifstream js(with_ext(stem, ".json"));
  if (!js) throw IoError("cannot read checkpoint manifest " + with_ext(stem, ".json").string());
  json manifest;
  try {
    manifest = json::parse(js);
  } catch (const json::exception& e) {
    throw ParseError("checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kCheckpointFormat) {
    throw CompatibilityError("checkpoint format is not " + std::string(kCheckpointFormat));
  }
  std::ifstream bin(with_ext(stem, ".bin"), std::ios::binary);
  if (!bin) throw IoError("cannot read checkpoint blob " + with_ext(stem, ".bin").string());
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bin)),
                                  std::istreambuf_iterator<char>());

  const auto& entries = manifest.at("params");
  if (entries.size() != store.size()) {
    throw CompatibilityError("checkpoint holds " + std::to_string(entries.size()) +
                             " tensors, model expects " + std::to_string(store.size()));
  }
  for (const auto& e : entries) {
    const std::string name = e.at("name");
    if (!store.contains(name)) throw CompatibilityError("checkpoint tensor not in model: " + name);
    Tensor& t = store.get(name);
    const Shape shape = e.at("shape").get<Shape>();
    if (shape != t.shape()) {
      throw CompatibilityError("shape mismatch for " + name + ": checkpoint " +
                               shape_str(shape) + ", model " + shape_str(t.shape()));
    }
    const std::uint64_t offset = e.at("offset");
    if (offset + 8 * t.size() > blob.size()) {
      throw CompatibilityError("checkpoint blob truncated at " + name);
    }
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_le(&blob[offset + 8 * i]);
  }
  return manifest.at("meta").dump();
}

}  // namespace catrinet
