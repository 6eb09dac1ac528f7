#pragma once

#include "protofew/encoder.hpp"

namespace protofew::ssl {

struct ScoreOptions {
  /// Scores are c * tanh(dot / c); c <= 0 leaves the raw dot product.
  double clip = 20.0;

  static ScoreOptions unclipped() { return {0.0}; }
};

/// [B,B] score table: entry (i,j) scores row i of `a` against row j of `b`.
/// Positives sit on the diagonal.
template <typename T>
num::Var<T> score_pairs(const num::Var<T>& a, const num::Var<T>& b,
                        const ScoreOptions& options = {});

/// Mean over rows of -log softmax(row)_ii.
template <typename T>
num::Var<T> nce_loss(const num::Var<T>& table);

/// Global [B,D] against a local grid [B,D,s,s]: one table per spatial
/// position (the position of image i is the positive for row i, the same
/// position of the other images are its negatives), losses averaged.
template <typename T>
num::Var<T> global_local_nce(const num::Var<T>& global_a, const num::Var<T>& local_b,
                             const ScoreOptions& options = {});

/// Two grids of the same scale, corresponding positions paired.
template <typename T>
num::Var<T> local_local_nce(const num::Var<T>& local_a, const num::Var<T>& local_b,
                            const ScoreOptions& options = {});

template <typename T>
struct AmdimTerms {
  num::Var<T> global_local_1;
  num::Var<T> global_local_2;
  num::Var<T> local_1_local_1;
};

/// The three terms for one direction (a scores against b).
template <typename T>
AmdimTerms<T> amdim_terms(const MultiScaleFeatures<T>& fa, const MultiScaleFeatures<T>& fb,
                          const ScoreOptions& options = {});

/// Sum of the three terms, averaged over both directions.
template <typename T>
num::Var<T> amdim_loss(const MultiScaleFeatures<T>& fa, const MultiScaleFeatures<T>& fb,
                       const ScoreOptions& options = {});

}  // namespace protofew::ssl
