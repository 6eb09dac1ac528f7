#pragma once

#include <random>
#include <vector>

#include "protofew/data/dataset.hpp"

namespace protofew::meta {

struct EpisodeItem {
  data::ItemRef item;
  std::size_t label = 0;  // episode-local class index
};

/// K-way C-shot episode. Support and query are class-major: class k owns
/// support[k*C .. k*C+C) and query[k*n_q .. k*n_q+n_q).
struct Episode {
  std::size_t way = 0, shot = 0, queries = 0;
  std::vector<EpisodeItem> support;
  std::vector<EpisodeItem> query;
  std::vector<std::size_t> class_map;  // episode label -> dataset class

  std::vector<std::size_t> support_labels() const;
  std::vector<std::size_t> query_labels() const;
};

/// Throws ProtocolError naming the deficit unless the dataset has `way`
/// classes with at least `shot + queries` items each.
void check_feasible(const data::ImageDataset& dataset, std::size_t way, std::size_t shot,
                    std::size_t queries);

/// Classes uniformly without replacement, then items uniformly without
/// replacement within each class (support first, query after).
Episode sample_episode(const data::ImageDataset& dataset, std::size_t way, std::size_t shot,
                       std::size_t queries, std::mt19937_64& rng);

}  // namespace protofew::meta
