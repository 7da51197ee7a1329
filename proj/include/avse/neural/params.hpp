#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace avse::nn {

struct ParamEntry {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  std::vector<int> shape;
  bool trainable = true;  // batch-norm running statistics are not
};

// Maps named tensors onto slices of one flat vector, in insertion order.
class ParamLayout {
 public:
  std::size_t add(std::string name, std::vector<int> shape, bool trainable = true);

  const ParamEntry& at(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::span<const ParamEntry> entries() const { return entries_; }
  std::size_t total() const { return total_; }
  std::size_t trainable_total() const;

  // True iff entries cover [0, total) contiguously with no gaps or overlaps.
  bool tiles_exactly() const;

 private:
  std::vector<ParamEntry> entries_;
  std::size_t total_ = 0;
};

struct ModelParams {
  std::vector<double> values;
  ParamLayout layout;

  double* data(std::string_view name) { return values.data() + layout.at(name).offset; }
  const double* data(std::string_view name) const { return values.data() + layout.at(name).offset; }
  std::span<double> slice(std::string_view name) {
    const auto& e = layout.at(name);
    return {values.data() + e.offset, e.size};
  }
  std::span<const double> slice(std::string_view name) const {
    const auto& e = layout.at(name);
    return {values.data() + e.offset, e.size};
  }
  bool all_finite() const;
};

}  // namespace avse::nn
