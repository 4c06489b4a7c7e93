#pragma once

#include "ppgnn/csr.hpp"
#include "ppgnn/rng.hpp"

namespace ppgnn {

/// Glorot-uniform initialization: entries drawn from
/// U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))), filled in
/// row-major order so layouts reproduce across platforms.
inline void glorot_fill(Matrix& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Index i = 0; i < w.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j)
      w(i, j) = limit * (2.0 * rng.uniform01() - 1.0);
}

}  // namespace ppgnn
