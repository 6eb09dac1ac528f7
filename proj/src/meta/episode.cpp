#include "protofew/meta/episode.hpp"

#include <numeric>
#include <string>

#include "protofew/errors.hpp"

namespace protofew::meta {

namespace {

// First k entries of a uniform random permutation of 0..n-1.
std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k,
                                                  std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

std::vector<std::size_t> Episode::support_labels() const {
  std::vector<std::size_t> out;
  out.reserve(support.size());
  for (const auto& s : support) out.push_back(s.label);
  return out;
}

std::vector<std::size_t> Episode::query_labels() const {
  std::vector<std::size_t> out;
  out.reserve(query.size());
  for (const auto& q : query) out.push_back(q.label);
  return out;
}

void check_feasible(const data::ImageDataset& dataset, std::size_t way, std::size_t shot,
                    std::size_t queries) {
  if (way < 1 || shot < 1) throw ProtocolError("episode needs way >= 1 and shot >= 1");
  const std::size_t need = shot + queries;
  std::size_t eligible = 0, smallest = SIZE_MAX;
  std::string smallest_name;
  for (std::size_t c = 0; c < dataset.num_classes(); ++c) {
    const std::size_t n = dataset.class_size(c);
    if (n >= need) ++eligible;
    if (n < smallest) {
      smallest = n;
      smallest_name = dataset.class_name(c);
    }
  }
  if (dataset.num_classes() < way) {
    throw ProtocolError("dataset " + dataset.id() + " has " + std::to_string(dataset.num_classes()) +
                        " classes; " + std::to_string(way) + "-way needs " +
                        std::to_string(way - dataset.num_classes()) + " more");
  }
  // Classes are drawn uniformly from all classes, so every class must fit.
  if (smallest < need) {
    throw ProtocolError("class " + smallest_name + " of " + dataset.id() + " has " +
                        std::to_string(smallest) + " items; " + std::to_string(shot) + "-shot with " +
                        std::to_string(queries) + " queries needs " + std::to_string(need) + " (" +
                        std::to_string(need - smallest) + " short; " + std::to_string(eligible) +
                        " classes large enough)");
  }
}

Episode sample_episode(const data::ImageDataset& dataset, std::size_t way, std::size_t shot,
                       std::size_t queries, std::mt19937_64& rng) {
  check_feasible(dataset, way, shot, queries);
  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.queries = queries;
  ep.class_map = draw_without_replacement(dataset.num_classes(), way, rng);
  ep.support.resize(way * shot);
  ep.query.resize(way * queries);
  for (std::size_t k = 0; k < way; ++k) {
    const std::size_t cls = ep.class_map[k];
    const auto items = draw_without_replacement(dataset.class_size(cls), shot + queries, rng);
    for (std::size_t i = 0; i < shot; ++i) ep.support[k * shot + i] = {{cls, items[i]}, k};
    for (std::size_t i = 0; i < queries; ++i) {
      ep.query[k * queries + i] = {{cls, items[shot + i]}, k};
    }
  }
  return ep;
}

}  // namespace protofew::meta
