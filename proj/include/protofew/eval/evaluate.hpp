#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "protofew/data/dataset.hpp"
#include "protofew/encoder.hpp"
#include "protofew/meta/prototypes.hpp"

namespace protofew::eval {

struct Protocol {
  std::size_t way = 5;
  std::size_t shot = 1;
  std::size_t queries = 15;
  std::size_t episodes = 600;
  std::uint64_t seed = 0;
  std::size_t resolution = 0;  // 0: the encoder's input resolution

  /// "5w1s"
  std::string name() const;
  /// Throws ProtocolError unless way >= 2, shot >= 1, queries >= 1 and
  /// episodes >= 1.
  void validate() const;
};

struct EvalReport {
  double mean_accuracy = 0;
  double ci95_halfwidth = 0;
  std::size_t episodes = 0;
  Protocol protocol;
  std::string checkpoint;  // checkpoint id; empty for untracked encoders
  std::string dataset;
  std::string flag;  // "no-meta" for the frozen nearest-centroid ablation
  std::vector<double> per_episode;
};

/// 1.96 * sample standard deviation / sqrt(n); 0 for n < 2.
double ci95_halfwidth(std::span<const double> accuracies);

/// Maps a preprocessed batch [n,3,R,R] to embeddings [n,D]. Must be
/// deterministic per row and safe to call from several threads.
using Embedder = std::function<num::Tensor<float>(const num::Tensor<float>& batch)>;

/// Eval-mode global embedding without gradient tracking.
Embedder encoder_embedder(Encoder<float>& encoder);

struct EvalOptions {
  std::size_t threads = 0;      // 0: worker_count()
  std::size_t chunk_size = 64;  // images per embedding call
  data::Normalization normalization;
  meta::Distance distance = meta::Distance::SquaredEuclidean;
  /// Transductive hook: maps (prototypes [K,D], query embeddings [Q,D]) to
  /// the prototypes actually used. Unset means plain inductive evaluation.
  /// Must be thread-safe.
  std::function<num::Tensor<double>(const num::Tensor<double>&, const num::Tensor<double>&)>
      refine_prototypes;
};

/// PROTOFEW_THREADS when set and positive, else the hardware concurrency.
std::size_t worker_count();

/// Episodic nearest-prototype accuracy. All episodes are sampled up front
/// from streams seeded by (protocol.seed, episode index); every item they use
/// is embedded once, in fixed chunks, so the report does not depend on the
/// number of workers.
EvalReport evaluate_embedder(const Embedder& embed, std::size_t resolution,
                             const data::ImageDataset& dataset, const Protocol& protocol,
                             const EvalOptions& options = {});

EvalReport evaluate(Encoder<float>& encoder, const data::ImageDataset& dataset,
                    const Protocol& protocol, const std::string& checkpoint = "",
                    const EvalOptions& options = {});

/// The no-meta ablation: the same mechanics on a pretrained-only encoder,
/// flagged "no-meta".
EvalReport evaluate_frozen_nn(Encoder<float>& encoder, const data::ImageDataset& dataset,
                              const Protocol& protocol, const std::string& checkpoint = "",
                              const EvalOptions& options = {});

struct CrossDomainResult {
  std::vector<EvalReport> cells;  // dataset-major
  double grand_mean = 0;          // mean of the cell accuracies
};

/// The 5-way 5/20/50-shot protocols.
std::vector<Protocol> cross_domain_protocols(std::size_t episodes = 600, std::uint64_t seed = 0,
                                             std::size_t queries = 15);

CrossDomainResult cross_domain_evaluate(Encoder<float>& encoder,
                                        std::span<const data::ImageDataset> targets,
                                        std::span<const Protocol> protocols,
                                        const std::string& checkpoint = "",
                                        const EvalOptions& options = {});

/// 64-bit FNV-1a over every state tensor, for before/after mutation checks.
std::uint64_t parameter_checksum(const Encoder<float>& encoder);

}  // namespace protofew::eval
