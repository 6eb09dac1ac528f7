#include "protofew/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>
#include <random>
#include <thread>

#include "protofew/errors.hpp"
#include "protofew/meta/episode.hpp"
#include "protofew/seed.hpp"

namespace protofew::eval {

std::string Protocol::name() const {
  return std::to_string(way) + "w" + std::to_string(shot) + "s";
}

void Protocol::validate() const {
  if (way < 2) throw ProtocolError("protocol " + name() + ": way must be at least 2");
  if (shot < 1) throw ProtocolError("protocol " + name() + ": shot must be at least 1");
  if (queries < 1) throw ProtocolError("protocol " + name() + ": queries must be at least 1");
  if (episodes < 1) throw ProtocolError("protocol " + name() + ": episodes must be at least 1");
}

double ci95_halfwidth(std::span<const double> acc) {
  const std::size_t n = acc.size();
  if (n < 2) return 0.0;
  double mean = 0;
  for (double a : acc) mean += a;
  mean /= static_cast<double>(n);
  double ss = 0;
  for (double a : acc) ss += (a - mean) * (a - mean);
  return 1.96 * std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

Embedder encoder_embedder(Encoder<float>& encoder) {
  return [&encoder](const num::Tensor<float>& batch) {
    num::NoGradGuard guard;
    return encoder.embed(num::Var<float>(batch), Mode::Eval).value();
  };
}

std::size_t worker_count() {
  if (const char* env = std::getenv("PROTOFEW_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

EvalReport evaluate_embedder(const Embedder& embed, std::size_t resolution,
                             const data::ImageDataset& dataset, const Protocol& protocol,
                             const EvalOptions& options) {
  protocol.validate();
  meta::check_feasible(dataset, protocol.way, protocol.shot, protocol.queries);
  if (resolution == 0) throw ContractViolation("evaluate: resolution must be positive");
  if (options.chunk_size == 0) throw ContractViolation("evaluate: chunk_size must be positive");

  std::vector<meta::Episode> episodes(protocol.episodes);
  for (std::size_t e = 0; e < protocol.episodes; ++e) {
    std::mt19937_64 rng(derive_seed(protocol.seed, {e}));
    episodes[e] = meta::sample_episode(dataset, protocol.way, protocol.shot, protocol.queries, rng);
  }
  std::map<data::ItemRef, std::size_t> row_of;
  for (const auto& ep : episodes) {
    for (const auto& s : ep.support) row_of.emplace(s.item, 0);
    for (const auto& q : ep.query) row_of.emplace(q.item, 0);
  }
  std::vector<data::ItemRef> used;
  used.reserve(row_of.size());
  for (auto& [item, row] : row_of) {
    row = used.size();
    used.push_back(item);
  }

  const std::size_t workers = options.threads ? options.threads : worker_count();
  const std::size_t chunks = (used.size() + options.chunk_size - 1) / options.chunk_size;
  std::vector<num::Tensor<float>> pieces(chunks);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t lo = c * options.chunk_size;
    const std::size_t hi = std::min(used.size(), lo + options.chunk_size);
    const auto batch = data::make_batch(
        dataset, std::span(used).subspan(lo, hi - lo), resolution, options.normalization);
    pieces[c] = embed(batch);
    if (pieces[c].rank() != 2 || pieces[c].dim(0) != hi - lo) {
      throw ContractViolation("evaluate: embedder returned " + num::shape_str(pieces[c].shape()) +
                              " for " + std::to_string(hi - lo) + " images");
    }
  });
  const std::size_t dim = pieces.front().dim(1);
  std::vector<float> table(used.size() * dim);
  for (std::size_t c = 0; c < chunks; ++c) {
    if (pieces[c].dim(1) != dim) throw ContractViolation("evaluate: embedding width changed");
    std::memcpy(table.data() + c * options.chunk_size * dim, pieces[c].raw(),
                pieces[c].size() * sizeof(float));
  }
  auto rows = [&](const std::vector<meta::EpisodeItem>& items) {
    num::Tensor<double> out({items.size(), dim});
    for (std::size_t i = 0; i < items.size(); ++i) {
      const float* src = table.data() + row_of.at(items[i].item) * dim;
      for (std::size_t k = 0; k < dim; ++k) out[i * dim + k] = src[k];
    }
    return out;
  };

  EvalReport report;
  report.protocol = protocol;
  report.episodes = protocol.episodes;
  report.dataset = dataset.id();
  report.per_episode.assign(protocol.episodes, 0.0);
  parallel_for(protocol.episodes, workers, [&](std::size_t e) {
    num::NoGradGuard guard;
    const auto& ep = episodes[e];
    const auto support_labels = ep.support_labels();
    auto protos = meta::compute_prototypes(num::Var<double>(rows(ep.support)), support_labels,
                                           ep.way, ep.class_map);
    const num::Var<double> query(rows(ep.query));
    if (options.refine_prototypes) {
      protos.prototypes =
          num::Var<double>(options.refine_prototypes(protos.prototypes.value(), query.value()));
    }
    const auto d = meta::prototype_distances(query, protos, options.distance);
    const auto pred = meta::nearest_prototype(d.value());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ep.query.size(); ++i) correct += pred[i] == ep.query[i].label;
    report.per_episode[e] = static_cast<double>(correct) / static_cast<double>(ep.query.size());
  });
  double total = 0;
  for (double a : report.per_episode) total += a;
  report.mean_accuracy = total / static_cast<double>(protocol.episodes);
  report.ci95_halfwidth = ci95_halfwidth(report.per_episode);
  return report;
}

EvalReport evaluate(Encoder<float>& encoder, const data::ImageDataset& dataset,
                    const Protocol& protocol, const std::string& checkpoint,
                    const EvalOptions& options) {
  const std::size_t R = protocol.resolution ? protocol.resolution : encoder.config().input_resolution;
  if (R < Encoder<float>::minimum_resolution()) {
    throw ProtocolError("protocol resolution " + std::to_string(R) + " is below the encoder minimum " +
                        std::to_string(Encoder<float>::minimum_resolution()));
  }
  auto report = evaluate_embedder(encoder_embedder(encoder), R, dataset, protocol, options);
  report.checkpoint = checkpoint;
  return report;
}

EvalReport evaluate_frozen_nn(Encoder<float>& encoder, const data::ImageDataset& dataset,
                              const Protocol& protocol, const std::string& checkpoint,
                              const EvalOptions& options) {
  auto report = evaluate(encoder, dataset, protocol, checkpoint, options);
  report.flag = "no-meta";
  return report;
}

std::vector<Protocol> cross_domain_protocols(std::size_t episodes, std::uint64_t seed,
                                             std::size_t queries) {
  std::vector<Protocol> out;
  for (std::size_t shot : {5, 20, 50}) out.push_back({5, shot, queries, episodes, seed, 0});
  return out;
}

CrossDomainResult cross_domain_evaluate(Encoder<float>& encoder,
                                        std::span<const data::ImageDataset> targets,
                                        std::span<const Protocol> protocols,
                                        const std::string& checkpoint,
                                        const EvalOptions& options) {
  if (targets.empty() || protocols.empty()) {
    throw ContractViolation("cross_domain_evaluate: need at least one dataset and protocol");
  }
  CrossDomainResult result;
  for (const auto& ds : targets) {
    for (const auto& p : protocols) {
      result.cells.push_back(evaluate(encoder, ds, p, checkpoint, options));
    }
  }
  double total = 0;
  for (const auto& c : result.cells) total += c.mean_accuracy;
  result.grand_mean = total / static_cast<double>(result.cells.size());
  return result;
}

std::uint64_t parameter_checksum(const Encoder<float>& encoder) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& rec : encoder.state()) {
    mix(rec.name.data(), rec.name.size());
    mix(rec.tensor.raw(), rec.tensor.size() * sizeof(float));
  }
  return h;
}

}  // namespace protofew::eval
