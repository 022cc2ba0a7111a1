#include "pfrnet/tensor.hpp"

#include <sstream>

namespace pfrnet {

std::string shape_string(const torch::Tensor& t) {
  if (!t.defined()) return "(undefined)";
  std::ostringstream os;
  os << '(';
  for (int64_t i = 0; i < t.dim(); ++i) {
    if (i) os << ',';
    os << t.size(i);
  }
  os << ')';
  return os.str();
}

void require_feature_map(const torch::Tensor& x, std::string_view what) {
  if (!x.defined() || x.dim() != 4) {
    throw ShapeError(std::string(what) + ": expected a 4-D feature map, got " + shape_string(x));
  }
  for (int64_t i = 0; i < 4; ++i) {
    if (x.size(i) < 1) {
      throw ShapeError(std::string(what) + ": empty extent in " + shape_string(x));
    }
  }
}

void require_channels(const torch::Tensor& x, int64_t channels, std::string_view what) {
  require_feature_map(x, what);
  if (x.size(1) != channels) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(channels) +
                     " channels, got " + shape_string(x));
  }
}

void require_same_spatial(const torch::Tensor& a, const torch::Tensor& b, std::string_view what) {
  require_feature_map(a, what);
  require_feature_map(b, what);
  if (a.size(2) != b.size(2) || a.size(3) != b.size(3)) {
    throw ShapeError(std::string(what) + ": spatial mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

void require_half_size(const torch::Tensor& fine, const torch::Tensor& coarse, std::string_view what) {
  require_feature_map(fine, what);
  require_feature_map(coarse, what);
  if (fine.size(0) != coarse.size(0)) {
    throw ShapeError(std::string(what) + ": batch sizes differ " + shape_string(fine) + " vs " +
                     shape_string(coarse));
  }
  if (fine.size(2) != 2 * coarse.size(2) || fine.size(3) != 2 * coarse.size(3)) {
    throw ShapeError(std::string(what) + ": " + shape_string(coarse) + " is not half of " +
                     shape_string(fine));
  }
}

bool all_finite(const torch::Tensor& x) { return torch::isfinite(x).all().item<bool>(); }

}  // namespace pfrnet
