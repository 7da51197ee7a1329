#include "avse/neural/params.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "avse/error.hpp"

namespace avse::nn {

std::size_t ParamLayout::add(std::string name, std::vector<int> shape, bool trainable) {
  if (contains(name)) throw Error("duplicate parameter " + name);
  std::size_t size = 1;
  for (int d : shape) {
    if (d <= 0) throw Error("parameter " + name + " has a non-positive dimension");
    size *= static_cast<std::size_t>(d);
  }
  entries_.push_back({std::move(name), total_, size, std::move(shape), trainable});
  total_ += size;
  return entries_.back().offset;
}

const ParamEntry& ParamLayout::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw Error("no parameter named " + std::string(name));
}

bool ParamLayout::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

std::size_t ParamLayout::trainable_total() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.size;
  return n;
}

bool ParamLayout::tiles_exactly() const {
  std::vector<const ParamEntry*> sorted;
  for (const auto& e : entries_) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->offset < b->offset; });
  std::size_t cursor = 0;
  for (const auto* e : sorted) {
    if (e->offset != cursor) return false;
    cursor += e->size;
  }
  return cursor == total_;
}

bool ModelParams::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace avse::nn
