#include "assayplan/action.hpp"

#include <algorithm>

namespace assayplan {

std::vector<std::size_t> members(AssaySet s) {
  std::vector<std::size_t> out;
  out.reserve(set_size(s));
  while (s != 0) {
    out.push_back(static_cast<std::size_t>(std::countr_zero(s)));
    s &= s - 1;
  }
  return out;
}

bool canonical_less(Action a, Action b) {
  if (a.size() != b.size()) return a.size() < b.size();
  const auto ma = members(a.batch);
  const auto mb = members(b.batch);
  return std::lexicographical_compare(ma.begin(), ma.end(), mb.begin(), mb.end());
}

std::string to_string(Action a) {
  if (a.is_eox()) return "eox";
  std::string out = "{";
  bool first = true;
  for (auto j : members(a.batch)) {
    if (!first) out += ',';
    out += std::to_string(j + 1);
    first = false;
  }
  return out + "}";
}

std::string to_string(Action a, const std::vector<std::string>& assay_names) {
  if (a.is_eox()) return "eox";
  std::string out = "{";
  bool first = true;
  for (auto j : members(a.batch)) {
    if (!first) out += ',';
    out += j < assay_names.size() ? assay_names[j] : std::to_string(j + 1);
    first = false;
  }
  return out + "}";
}

}  // namespace assayplan
