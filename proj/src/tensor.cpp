#include "pbcnn/tensor.hpp"

#include <cmath>
#include <sstream>

namespace pbcnn {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
  for (T v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template bool all_finite(const BasicTensor<float>&);
template bool all_finite(const BasicTensor<double>&);

}  // namespace pbcnn
