#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "protofew/data/dataset.hpp"
#include "protofew/encoder.hpp"
#include "protofew/ssl/augment.hpp"
#include "protofew/ssl/loss.hpp"

namespace protofew::ssl {

struct PretrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 2e-4;
  std::uint64_t seed = 0;
  AugmentConfig augment;
  ScoreOptions score;
  data::Normalization normalization;
  /// Off by default so loss curves of identical runs are byte-identical.
  bool record_wall_time = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0;
  double wall_seconds = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Label-free two-view training of `encoder` with Adam on amdim_loss. Each
/// epoch visits a seeded permutation of every item in full batches (a
/// single batch of everything when the dataset is smaller than one batch).
/// Throws NumericDomainError naming the batch seed on a non-finite loss.
std::vector<EpochRecord> pretrain(const data::ImageDataset& dataset, Encoder<float>& encoder,
                                  const PretrainConfig& config, const EpochCallback& on_epoch = {});

/// `epoch,mean_loss,wall_seconds`
void write_loss_csv(const std::vector<EpochRecord>& curve, const std::filesystem::path& path);

}  // namespace protofew::ssl
