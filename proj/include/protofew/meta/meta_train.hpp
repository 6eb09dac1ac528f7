#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "protofew/data/dataset.hpp"
#include "protofew/encoder.hpp"
#include "protofew/meta/episode.hpp"
#include "protofew/meta/prototypes.hpp"

namespace protofew::meta {

struct MetaTrainConfig {
  std::size_t way = 5;
  std::size_t shot = 1;
  std::size_t queries = 15;
  std::size_t episodes = 500;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  std::size_t resolution = 0;  // 0: the encoder's input resolution
  Distance distance = Distance::SquaredEuclidean;
  data::Normalization normalization;
};

struct EpisodeRecord {
  std::size_t episode = 0;
  double loss = 0;
  double accuracy = 0;
};

using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

/// Episodic fine-tuning with Adam on the prototype loss. Batch-norm layers
/// stay in evaluation mode and only conv/linear weights are updated.
/// Episode i is drawn from a stream seeded by (seed, i).
std::vector<EpisodeRecord> meta_train(Encoder<float>& encoder, const data::ImageDataset& dataset,
                                      const MetaTrainConfig& config,
                                      const EpisodeCallback& on_episode = {});

/// `episode,loss,accuracy`
void write_meta_log_csv(const std::vector<EpisodeRecord>& log, const std::filesystem::path& path);

}  // namespace protofew::meta
