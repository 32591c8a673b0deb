#pragma once

#include <cmath>
#include <vector>

#include "pag/errors.hpp"
#include "pag/nn/tensor.hpp"

namespace pag::nn {

template <typename T>
struct CeResult {
  double loss = 0.0;            // sum over items of scale * CE_i
  Tensor<T> d_logits;           // gradient of that sum w.r.t. logits
  std::vector<double> per_item; // unscaled CE per item
};

// Softmax cross-entropy. `scale` multiplies every item's contribution:
// 1/N gives the batch-mean loss, 1 gives independent per-item losses
// (whose input gradients do not couple across the batch).
template <typename T>
CeResult<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels, double scale) {
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("cross_entropy: label count does not match batch");
  CeResult<T> r;
  r.d_logits = Tensor<T>(logits.shape());
  r.per_item.resize(n);
  for (int i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= k) throw DataError("cross_entropy: label " + std::to_string(y) +
                                         " outside [0," + std::to_string(k) + ")");
    const T* row = logits.data() + static_cast<size_t>(i) * k;
    double m = row[0];
    for (int j = 1; j < k; ++j) m = std::max<double>(m, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - m);
    const double lse = m + std::log(sum);
    const double ce = lse - static_cast<double>(row[y]);
    r.per_item[i] = ce;
    r.loss += scale * ce;
    T* drow = r.d_logits.data() + static_cast<size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - lse);
      drow[j] = static_cast<T>(scale * (p - (j == y ? 1.0 : 0.0)));
    }
  }
  return r;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) {
    const T* row = logits.data() + static_cast<size_t>(i) * k;
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = best;
  }
  return out;
}

}  // namespace pag::nn
