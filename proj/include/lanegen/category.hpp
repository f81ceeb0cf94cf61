#pragma once

#include <array>
#include <string>
#include <string_view>

#include "lanegen/error.hpp"

namespace lanegen {

enum class Category { normal, snow, rain, fog, night, dusk };

inline constexpr std::array<Category, 6> kAllCategories{Category::normal, Category::snow, Category::rain,
                                                         Category::fog,    Category::night, Category::dusk};

inline constexpr std::string_view category_name(Category c) {
  switch (c) {
    case Category::normal: return "normal";
    case Category::snow: return "snow";
    case Category::rain: return "rain";
    case Category::fog: return "fog";
    case Category::night: return "night";
    case Category::dusk: return "dusk";
  }
  return "?";
}

// Column heading, e.g. "Night".
inline std::string category_title(Category c) {
  std::string s(category_name(c));
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

inline Category parse_category(std::string_view s) {
  for (auto c : kAllCategories)
    if (category_name(c) == s) return c;
  throw InvalidArgument("unknown category '" + std::string(s) + "'");
}

inline constexpr std::size_t category_index(Category c) { return static_cast<std::size_t>(c); }

}  // namespace lanegen
