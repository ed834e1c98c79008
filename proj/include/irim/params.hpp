#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "irim/tensor.hpp"

namespace irim {

/// Named slice of a flat parameter vector.
struct ParamSegment {
  std::string name;
  std::size_t offset = 0;
  Shape shape;

  std::size_t size() const { return shape_size(shape); }
};

/// Appends a segment at the current end of `layout` and returns its index.
inline std::size_t add_segment(std::vector<ParamSegment>& layout,
                               std::string name, Shape shape) {
  const std::size_t offset =
      layout.empty() ? 0 : layout.back().offset + layout.back().size();
  layout.push_back({std::move(name), offset, std::move(shape)});
  return layout.size() - 1;
}

inline std::size_t layout_size(const std::vector<ParamSegment>& layout) {
  return layout.empty() ? 0 : layout.back().offset + layout.back().size();
}

template <typename T>
std::span<T> segment_view(std::span<T> flat, const ParamSegment& s) {
  return flat.subspan(s.offset, s.size());
}

}  // namespace irim
