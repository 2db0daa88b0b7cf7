#include "cdrdemo/labels.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>

#include "cdrdemo/io.hpp"

namespace cdrdemo {

std::string_view to_string(Gender g) { return g == Gender::kMale ? "M" : "F"; }

std::string_view to_string(Role r) {
  switch (r) {
    case Role::kSeed:
      return "seed";
    case Role::kValidation:
      return "validation";
    case Role::kUnlabeled:
      return "unlabeled";
  }
  return "unlabeled";
}

Category AgeBoundaries::category_of(int age) const {
  const auto it = std::upper_bound(lower_bounds.begin(), lower_bounds.end(), age);
  return static_cast<Category>(it - lower_bounds.begin());
}

std::optional<Category> LabelStore::age_category(std::size_t i) const {
  if (!age[i]) return std::nullopt;
  return boundaries.category_of(*age[i]);
}

std::optional<std::size_t> LabelStore::find(std::string_view user) const {
  const auto it = std::lower_bound(user_ids.begin(), user_ids.end(), user);
  if (it == user_ids.end() || *it != user) return std::nullopt;
  return static_cast<std::size_t>(it - user_ids.begin());
}

void LabelStore::normalize() {
  const std::size_t n = user_ids.size();
  if (age.size() != n || gender.size() != n || role.size() != n) {
    throw DataError("label columns have inconsistent lengths");
  }
  if (!std::is_sorted(boundaries.lower_bounds.begin(), boundaries.lower_bounds.end())) {
    throw UsageError("age boundaries must be ascending");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return user_ids[a] < user_ids[b]; });
  LabelStore sorted;
  sorted.boundaries = boundaries;
  for (std::size_t i : order) {
    if (!sorted.user_ids.empty() && sorted.user_ids.back() == user_ids[i]) {
      throw DataError("duplicate label row for user " + user_ids[i]);
    }
    if (role[i] != Role::kUnlabeled && !age[i] && !gender[i]) {
      throw DataError("user " + user_ids[i] + " has role " + std::string(to_string(role[i])) +
                      " but no label");
    }
    sorted.user_ids.push_back(std::move(user_ids[i]));
    sorted.age.push_back(age[i]);
    sorted.gender.push_back(gender[i]);
    sorted.role.push_back(role[i]);
  }
  *this = std::move(sorted);
}

LabelStore read_labels_csv(std::istream& in, AgeBoundaries boundaries) {
  LabelStore s;
  s.boundaries = std::move(boundaries);
  io::for_each_row(in, "user_id,age_years,gender,role", [&](const auto& f, std::size_t line) {
    if (f.size() != 4) throw ParseError(line, "expected 4 fields");
    if (f[0].empty()) throw ParseError(line, "empty user id");
    s.user_ids.emplace_back(f[0]);
    if (f[1].empty()) {
      s.age.emplace_back();
    } else {
      const long long a = io::parse_int(f[1], line);
      if (a < 0 || a > 150) throw ParseError(line, "implausible age");
      s.age.emplace_back(static_cast<int>(a));
    }
    if (f[2].empty()) {
      s.gender.emplace_back();
    } else if (f[2] == "M") {
      s.gender.emplace_back(Gender::kMale);
    } else if (f[2] == "F") {
      s.gender.emplace_back(Gender::kFemale);
    } else {
      throw ParseError(line, "gender must be M, F or empty");
    }
    if (f[3] == "seed") {
      s.role.push_back(Role::kSeed);
    } else if (f[3] == "validation") {
      s.role.push_back(Role::kValidation);
    } else if (f[3] == "unlabeled") {
      s.role.push_back(Role::kUnlabeled);
    } else {
      throw ParseError(line, "role must be seed, validation or unlabeled");
    }
  });
  s.normalize();
  return s;
}

void write_labels_csv(std::ostream& out, const LabelStore& labels) {
  out << "user_id,age_years,gender,role\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << labels.user_ids[i] << ',';
    if (labels.age[i]) out << *labels.age[i];
    out << ',';
    if (labels.gender[i]) out << to_string(*labels.gender[i]);
    out << ',' << to_string(labels.role[i]) << '\n';
  }
}

}  // namespace cdrdemo
