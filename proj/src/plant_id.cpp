#include "pvx/plant_id.hpp"

#include <charconv>

#include "pvx/error.hpp"

namespace pvx {

namespace {

int parse_positive(std::string_view part, std::string_view whole) {
  int value = 0;
  const auto* end = part.data() + part.size();
  auto [ptr, ec] = std::from_chars(part.data(), end, value);
  if (part.empty() || ec != std::errc{} || ptr != end || value <= 0)
    fail(ErrorCode::Parse, "invalid plant id '" + std::string(whole) + "'");
  return value;
}

}  // namespace

PlantId PlantId::parse(std::string_view text) {
  const auto dot = text.find('.');
  if (dot == std::string_view::npos) fail(ErrorCode::Parse, "invalid plant id '" + std::string(text) + "'");
  return {parse_positive(text.substr(0, dot), text), parse_positive(text.substr(dot + 1), text)};
}

std::string PlantId::str() const { return std::to_string(row) + "." + std::to_string(column); }

}  // namespace pvx
