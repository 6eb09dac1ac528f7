#include "protofew/meta/meta_train.hpp"

#include <cstdio>
#include <fstream>
#include <string>

#include "protofew/errors.hpp"
#include "protofew/num/adam.hpp"
#include "protofew/seed.hpp"

namespace protofew::meta {

std::vector<EpisodeRecord> meta_train(Encoder<float>& encoder, const data::ImageDataset& dataset,
                                      const MetaTrainConfig& config,
                                      const EpisodeCallback& on_episode) {
  if (config.episodes == 0) throw ConfigError("meta_train: episodes must be positive");
  if (config.way < 2) throw ConfigError("meta_train: way must be at least 2");
  if (config.queries == 0) throw ConfigError("meta_train: queries must be positive");
  if (!(config.lr >= 0)) throw ConfigError("meta_train: lr must be nonnegative");
  check_feasible(dataset, config.way, config.shot, config.queries);
  const std::size_t R = config.resolution ? config.resolution : encoder.config().input_resolution;

  auto params = encoder.weight_parameters();
  num::Adam<float> adam(params, {.lr = config.lr});
  std::vector<EpisodeRecord> log;
  log.reserve(config.episodes);
  for (std::size_t e = 0; e < config.episodes; ++e) {
    const std::uint64_t episode_seed = derive_seed(config.seed, {e});
    std::mt19937_64 rng(episode_seed);
    const Episode ep = sample_episode(dataset, config.way, config.shot, config.queries, rng);
    std::vector<data::ItemRef> items;
    items.reserve(ep.support.size() + ep.query.size());
    for (const auto& s : ep.support) items.push_back(s.item);
    for (const auto& q : ep.query) items.push_back(q.item);
    const auto batch = data::make_batch(dataset, items, R, config.normalization);

    const auto support_labels = ep.support_labels();
    const auto query_labels = ep.query_labels();
    std::vector<num::Tensor<float>> grads;
    EpisodeRecord rec{e, 0, 0};
    try {
      const auto all = embed_for_meta(encoder, num::Var<float>(batch), Mode::Eval);
      const std::size_t ns = ep.support.size(), nq = ep.query.size();
      std::vector<std::size_t> sidx(ns), qidx(nq);
      for (std::size_t i = 0; i < ns; ++i) sidx[i] = i;
      for (std::size_t i = 0; i < nq; ++i) qidx[i] = ns + i;
      const auto support = num::gather_rows(all, sidx);
      const auto query = num::gather_rows(all, qidx);
      const auto protos = compute_prototypes(support, support_labels, ep.way, ep.class_map);
      const auto loss = meta_loss(query, query_labels, protos, config.distance);
      rec.loss = loss.value().item();
      const auto pred = nearest_prototype(prototype_distances(query, protos, config.distance).value());
      std::size_t correct = 0;
      for (std::size_t i = 0; i < nq; ++i) correct += pred[i] == query_labels[i];
      rec.accuracy = static_cast<double>(correct) / static_cast<double>(nq);
      grads = num::gradients<float>(loss, params);
    } catch (const NumericDomainError& ex) {
      char seed_hex[19];
      std::snprintf(seed_hex, sizeof seed_hex, "0x%016llx",
                    static_cast<unsigned long long>(episode_seed));
      throw NumericDomainError("meta_train: non-finite value in episode " + std::to_string(e) +
                               " (episode seed " + seed_hex + "): " + ex.what());
    }
    for (const auto& g : grads) {
      if (!g.all_finite()) {
        throw NumericDomainError("meta_train: non-finite gradient in episode " + std::to_string(e));
      }
    }
    adam.step(grads);
    log.push_back(rec);
    if (on_episode) on_episode(rec);
  }
  return log;
}

void write_meta_log_csv(const std::vector<EpisodeRecord>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << "episode,loss,accuracy\n";
  char buf[96];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", r.episode, r.loss, r.accuracy);
    out << buf;
  }
  if (!out) throw IngestionError("write failed for " + path.string());
}

}  // namespace protofew::meta
