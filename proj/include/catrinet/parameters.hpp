#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "catrinet/tensor.hpp"

namespace catrinet {

enum class Init { zeros, ones, xavier_uniform, uniform_small };

/// Owns every trainable tensor by name. Tensors never move once added, so
/// layers may hold raw pointers into the store for its lifetime. Iteration
/// order is insertion order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Tensor& add(const std::string& name, Shape shape, Init init, std::mt19937_64& rng);
  /// Non-trainable state saved alongside parameters (no gradient slot).
  Tensor& add_buffer(const std::string& name, Shape shape);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Tensor& at(std::size_t i) { return *entries_[i].second; }
  const Tensor& at(std::size_t i) const { return *entries_[i].second; }

  /// Scalar count of trainable values.
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Tensor>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr const char* kCheckpointFormat = "catrinet-ckpt-v1";

/// Writes `<stem>.json` (manifest) and `<stem>.bin` (little-endian float64
/// blob). `extra` is embedded verbatim under the manifest key "meta" and must
/// be a serialized JSON object.
void save_checkpoint(const ParameterStore& store, const std::filesystem::path& stem,
                     const std::string& extra_json = "{}");

/// Loads values into an already-constructed store. Every manifest entry must
/// exist in the store with an identical shape and vice versa. Returns the
/// "meta" object as serialized JSON.
std::string load_checkpoint(ParameterStore& store, const std::filesystem::path& stem);

}  // namespace catrinet
