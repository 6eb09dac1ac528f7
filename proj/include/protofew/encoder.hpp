#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protofew/num/checkpoint.hpp"
#include "protofew/num/ops.hpp"

namespace protofew {

struct EncoderConfig {
  std::size_t ndf = 32;
  std::size_t ndepth = 4;
  std::size_t nrkhs = 64;
  std::size_t input_resolution = 32;
  std::array<std::size_t, 2> local_scales{5, 7};

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// CPU-trainable defaults.
EncoderConfig desk_encoder_config();
/// AmdimNet dimensions (ndf=192, ndepth=8, nrkhs=1536) at 128 px.
EncoderConfig paper_encoder_config();

/// Plain-text `key: value` rendering, one key per line.
std::string encoder_config_to_text(const EncoderConfig& config);
EncoderConfig encoder_config_from_text(const std::string& text);

/// Static layer plan for a resolution: per-block stride/width/extent and the
/// blocks feeding each local head.
struct EncoderPlan {
  std::size_t stem_extent = 0;
  std::vector<std::size_t> block_stride;
  std::vector<std::size_t> block_width;
  std::vector<std::size_t> block_extent;
  std::array<std::size_t, 2> local_block{0, 0};
};

/// Throws ConfigError when a local scale exceeds every block's extent.
EncoderPlan plan_encoder(const EncoderConfig& config);

enum class Mode { Train, Eval };

template <typename T>
struct MultiScaleFeatures {
  num::Var<T> global;   // [B, nrkhs]
  num::Var<T> local_1;  // [B, nrkhs, s1, s1]
  num::Var<T> local_2;  // [B, nrkhs, s2, s2]
};

/// Residual convolutional embedding network with one global and two local
/// heads projecting into a shared nrkhs-dimensional score space.
///
/// Stem: 3x3 stride-2 conv, BN, ReLU. Block i: two 3x3 convs with BN, stride 2
/// on even i, width ndf for the first half of the blocks and 2*ndf after,
/// with a 1x1 projection shortcut when shape changes. Local head k pools its
/// source block to s_k x s_k and applies a 1x1 conv MLP; the global head
/// average-pools the last block and applies a linear MLP.
template <typename T>
class Encoder {
 public:
  Encoder(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  const EncoderPlan& plan() const { return plan_; }

  /// images: [B, 3, R, R] with R == config().input_resolution.
  MultiScaleFeatures<T> encode(const num::Var<T>& images, Mode mode);

  /// Global head only; accepts any resolution >= minimum_resolution().
  num::Var<T> embed(const num::Var<T>& images, Mode mode);

  static constexpr std::size_t minimum_resolution() { return 8; }

  /// Learnable tensors (conv/linear weights and biases plus BN affine).
  std::vector<num::Var<T>> parameters() const;
  /// Conv/linear weights and biases only (BN affine excluded).
  std::vector<num::Var<T>> weight_parameters() const;
  std::size_t parameter_count() const;

  /// Every tensor including BN running statistics, named, in float32.
  std::vector<num::NamedTensor> state() const;
  /// Loads a state produced by an encoder with the same config.
  void load_state(const std::vector<num::NamedTensor>& records);

 private:
  struct Conv {
    num::Var<T> weight;
    num::Var<T> bias;  // undefined when the layer has no bias
    num::Conv2dOptions options;
  };
  struct BatchNorm {
    num::Var<T> gamma;
    num::Var<T> beta;
    num::BatchNormStats<T> stats;
  };
  struct Linear {
    num::Var<T> weight;
    num::Var<T> bias;
  };
  struct Block {
    Conv conv1, conv2;
    BatchNorm bn1, bn2;
    bool has_shortcut = false;
    Conv shortcut;
  };
  struct LocalHead {
    Conv conv1, conv2;
  };

  num::Var<T> apply(const Conv& c, const num::Var<T>& x) const;
  num::Var<T> apply(BatchNorm& bn, const num::Var<T>& x, Mode mode);
  num::Var<T> run_block(Block& b, const num::Var<T>& x, Mode mode);
  num::Var<T> global_head(const num::Var<T>& top);
  void check_input(const num::Var<T>& images, const char* op) const;

  template <typename F>
  void for_each_tensor(F&& f);

  EncoderConfig config_;
  EncoderPlan plan_;
  Conv stem_conv_;
  BatchNorm stem_bn_;
  std::vector<Block> blocks_;
  std::array<LocalHead, 2> local_heads_;
  Linear global_fc1_, global_fc2_;
};

/// The meta-stage embedding f(x): the global head at any supported
/// resolution.
template <typename T>
num::Var<T> embed_for_meta(Encoder<T>& encoder, const num::Var<T>& images,
                           Mode mode = Mode::Eval) {
  return encoder.embed(images, mode);
}

/// Checkpoint plus `<path>.cfg` sidecar.
void save_encoder(const Encoder<float>& encoder, const std::filesystem::path& path);
Encoder<float> load_encoder(const std::filesystem::path& path);

/// Same weights in another precision.
template <typename To, typename From>
Encoder<To> convert_encoder(const Encoder<From>& encoder) {
  Encoder<To> out(encoder.config(), 0);
  out.load_state(encoder.state());
  return out;
}

}  // namespace protofew
