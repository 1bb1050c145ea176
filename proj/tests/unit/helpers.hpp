#pragma once

#include <cmath>

#include "eigenscope/hilbert.hpp"
#include "eigenscope/rng.hpp"

namespace testutil {

using namespace eigenscope;

inline Matrix random_matrix(Index rows, Index cols, CounterRng& rng) {
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = rng.complex_normal();
  return m;
}

inline Vector random_vector(Index n, CounterRng& rng) { return random_matrix(n, 1, rng).col(0); }

inline Vector random_unit(Index n, CounterRng& rng) {
  Vector v = random_vector(n, rng);
  return v / v.norm();
}

inline Matrix random_unitary(Index n, CounterRng& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(n, n, rng));
  Matrix q = qr.householderQ();
  return q;
}

inline Matrix dft(Index n) {
  Matrix f(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index k = 0; k < n; ++k)
      f(j, k) = std::polar(1.0 / std::sqrt(double(n)), -kTwoPi * double(j * k) / double(n));
  return f;
}

}  // namespace testutil
