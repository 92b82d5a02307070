#pragma once

#include <compare>
#include <functional>
#include <string>
#include <string_view>

namespace pvx {

// Physical module position "row.column" as listed in the plant file.
struct PlantId {
  int row = 0;
  int column = 0;

  // Throws Parse unless the text is "<positive int>.<positive int>".
  static PlantId parse(std::string_view text);
  std::string str() const;

  friend auto operator<=>(const PlantId&, const PlantId&) = default;
};

}  // namespace pvx

template <>
struct std::hash<pvx::PlantId> {
  std::size_t operator()(const pvx::PlantId& id) const noexcept {
    return std::hash<long long>{}((static_cast<long long>(id.row) << 32) ^ id.column);
  }
};
