#include "coast/ndarray.hpp"

#include <cmath>
#include <sstream>

namespace coast {

std::string Shape::str() const {
  std::ostringstream os;
  os << "{";
  for (int i = 0; i < nd; ++i) {
    if (i) os << ",";
    os << d[i];
  }
  os << "}";
  return os.str();
}

bool NdArray::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double NdArray::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace coast
