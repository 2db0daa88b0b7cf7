#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdrdemo/common.hpp"

namespace cdrdemo {

enum class Gender : std::uint8_t { kMale, kFemale };
enum class Role : std::uint8_t { kSeed, kValidation, kUnlabeled };

std::string_view to_string(Gender g);
std::string_view to_string(Role r);

// Ascending lower bounds of categories 1..C-1. The default yields four
// groups: <25, 25-34, 35-49, >=50.
struct AgeBoundaries {
  std::vector<int> lower_bounds = {25, 35, 50};

  std::size_t categories() const { return lower_bounds.size() + 1; }
  Category category_of(int age) const;
};

// Ground-truth demographics. Rows are sorted by user id. Users with role
// seed or validation must carry at least an age or a gender.
struct LabelStore {
  std::vector<std::string> user_ids;
  std::vector<std::optional<int>> age;
  std::vector<std::optional<Gender>> gender;
  std::vector<Role> role;
  AgeBoundaries boundaries;

  std::size_t size() const { return user_ids.size(); }
  std::size_t categories() const { return boundaries.categories(); }
  std::optional<Category> age_category(std::size_t i) const;
  std::optional<std::size_t> find(std::string_view user) const;

  // Sorts rows by id and checks uniqueness and role/label consistency.
  void normalize();
};

// `user_id,age_years,gender,role`; age and gender may be empty.
LabelStore read_labels_csv(std::istream& in, AgeBoundaries boundaries = {});
void write_labels_csv(std::ostream& out, const LabelStore& labels);

}  // namespace cdrdemo
