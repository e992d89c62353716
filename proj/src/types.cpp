#include "lagnmpc/types.hpp"

#include <algorithm>
#include <cmath>

namespace lagnmpc {

BoxSet::BoxSet(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size()) throw std::invalid_argument("box bounds differ in length");
}

BoxSet BoxSet::interval(double lo, double hi) {
  Vector l(1), u(1);
  l << lo;
  u << hi;
  return BoxSet(l, u);
}

bool BoxSet::contains(ConstVectorRef v) const {
  if (v.size() != lower.size()) return false;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v(i) >= lower(i) && v(i) <= upper(i))) return false;
  }
  return true;
}

double BoxSet::violation(ConstVectorRef v) const {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    worst = std::max({worst, v(i) - upper(i), lower(i) - v(i)});
  }
  return worst;
}

bool BoxSet::bounded() const {
  return lower.allFinite() && upper.allFinite();
}

bool BoxSet::has_empty_interval() const {
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower(i) < upper(i))) return true;
  }
  return false;
}

void BoxSet::validate(const std::string& what) const {
  if (lower.size() == 0 || lower.size() != upper.size()) {
    throw std::invalid_argument(what + ": bounds are empty or mismatched");
  }
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i)) {
      throw std::invalid_argument(what + ": lower bound exceeds upper bound");
    }
  }
}

}  // namespace lagnmpc
