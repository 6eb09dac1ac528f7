#pragma once

#include <cstdint>
#include <vector>

#include "protofew/data/dataset.hpp"
#include "protofew/encoder.hpp"
#include "protofew/ssl/augment.hpp"

namespace protofew::eval {

struct SupervisedConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 2e-4;
  std::uint64_t seed = 0;
  ssl::AugmentConfig augment;  // one augmented view per image
  data::Normalization normalization;
};

struct SupervisedEpoch {
  std::size_t epoch = 0;
  double mean_loss = 0;
  double train_accuracy = 0;  // running accuracy of the head over the epoch
};

/// Trains `encoder` with a linear classification head on its global
/// features and cross-entropy on the dataset's class labels; the head is
/// discarded afterwards.
std::vector<SupervisedEpoch> supervised_train(Encoder<float>& encoder,
                                              const data::ImageDataset& dataset,
                                              const SupervisedConfig& config);

/// Fresh encoder (initialised from `init_seed`) trained by supervised_train.
Encoder<float> supervised_baseline(const data::ImageDataset& dataset,
                                   const EncoderConfig& encoder_config,
                                   const SupervisedConfig& config, std::uint64_t init_seed,
                                   std::vector<SupervisedEpoch>* curve = nullptr);

}  // namespace protofew::eval
