#include "protofew/encoder.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "protofew/errors.hpp"

namespace protofew {

using num::Tensor;
using num::Var;

EncoderConfig desk_encoder_config() { return EncoderConfig{}; }

EncoderConfig paper_encoder_config() {
  EncoderConfig c;
  c.ndf = 192;
  c.ndepth = 8;
  c.nrkhs = 1536;
  c.input_resolution = 128;
  c.local_scales = {5, 7};
  return c;
}

std::string encoder_config_to_text(const EncoderConfig& c) {
  std::ostringstream os;
  os << "ndf: " << c.ndf << '\n'
     << "ndepth: " << c.ndepth << '\n'
     << "nrkhs: " << c.nrkhs << '\n'
     << "input_resolution: " << c.input_resolution << '\n'
     << "local_scales: " << c.local_scales[0] << ',' << c.local_scales[1] << '\n';
  return os.str();
}

EncoderConfig encoder_config_from_text(const std::string& text) {
  EncoderConfig c;
  std::istringstream in(text);
  std::string line;
  auto number = [](const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const unsigned long long n = std::stoull(v, &used);
      if (used != v.size() || n == 0) throw std::invalid_argument(v);
      return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw ConfigError("encoder config: bad value for " + key + ": '" + v + "'");
    }
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("encoder config: expected 'key: value', got '" + line + "'");
    }
    std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
    };
    trim(key);
    trim(value);
    if (key == "ndf") {
      c.ndf = number(key, value);
    } else if (key == "ndepth") {
      c.ndepth = number(key, value);
    } else if (key == "nrkhs") {
      c.nrkhs = number(key, value);
    } else if (key == "input_resolution") {
      c.input_resolution = number(key, value);
    } else if (key == "local_scales") {
      const auto comma = value.find(',');
      if (comma == std::string::npos) {
        throw ConfigError("encoder config: local_scales needs two values");
      }
      std::string a = value.substr(0, comma), b = value.substr(comma + 1);
      trim(a);
      trim(b);
      c.local_scales = {number(key, a), number(key, b)};
    } else {
      throw ConfigError("encoder config: unknown key '" + key + "'");
    }
  }
  return c;
}

namespace {

std::vector<std::size_t> block_extents(const EncoderConfig& c, std::size_t resolution,
                                       std::size_t& stem_extent) {
  stem_extent = num::conv_out_extent(resolution, 3, 2, 1);
  std::vector<std::size_t> out;
  std::size_t e = stem_extent;
  for (std::size_t i = 0; i < c.ndepth; ++i) {
    if (i % 2 == 0) e = num::conv_out_extent(e, 3, 2, 1);
    out.push_back(e);
  }
  return out;
}

}  // namespace

EncoderPlan plan_encoder(const EncoderConfig& c) {
  if (c.ndf == 0 || c.ndepth == 0 || c.nrkhs == 0 || c.input_resolution == 0) {
    throw ConfigError("encoder config: all sizes must be positive");
  }
  if (c.input_resolution < Encoder<float>::minimum_resolution()) {
    throw ConfigError("encoder config: input_resolution " +
                      std::to_string(c.input_resolution) + " below minimum " +
                      std::to_string(Encoder<float>::minimum_resolution()));
  }
  EncoderPlan p;
  p.block_extent = block_extents(c, c.input_resolution, p.stem_extent);
  const std::size_t half = (c.ndepth + 1) / 2;
  for (std::size_t i = 0; i < c.ndepth; ++i) {
    p.block_stride.push_back(i % 2 == 0 ? 2 : 1);
    p.block_width.push_back(i < half ? c.ndf : 2 * c.ndf);
  }

  auto deepest_at_least = [&](std::size_t s, std::size_t limit) -> std::ptrdiff_t {
    for (std::size_t i = limit; i-- > 0;) {
      if (p.block_extent[i] >= s) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
  };
  for (std::size_t s : c.local_scales) {
    if (s == 0 || deepest_at_least(s, c.ndepth) < 0) {
      throw ConfigError("encoder config: local scale " + std::to_string(s) +
                        " not realizable at resolution " +
                        std::to_string(c.input_resolution) + " (largest block extent " +
                        std::to_string(p.block_extent.front()) + ")");
    }
  }
  // The finer grid takes the deepest block that covers it; the coarser-cell
  // (larger) grid takes the deepest covering block strictly above that one,
  // so the two maps come from different stages whenever possible.
  const bool first_is_small = c.local_scales[0] <= c.local_scales[1];
  const std::size_t small = first_is_small ? c.local_scales[0] : c.local_scales[1];
  const std::size_t large = first_is_small ? c.local_scales[1] : c.local_scales[0];
  const auto small_block = static_cast<std::size_t>(deepest_at_least(small, c.ndepth));
  std::ptrdiff_t large_block = deepest_at_least(large, small_block);
  if (large_block < 0) large_block = deepest_at_least(large, c.ndepth);
  if (first_is_small) {
    p.local_block = {small_block, static_cast<std::size_t>(large_block)};
  } else {
    p.local_block = {static_cast<std::size_t>(large_block), small_block};
  }
  return p;
}

namespace {

template <typename T>
Var<T> kaiming(std::mt19937_64& rng, num::Shape shape, std::size_t fan_in) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return Var<T>(std::move(t), true);
}

template <typename T>
Var<T> zeros(std::size_t n) {
  return Var<T>(Tensor<T>({n}), true);
}

}  // namespace

template <typename T>
Encoder<T>::Encoder(EncoderConfig config, std::uint64_t seed)
    : config_(config), plan_(plan_encoder(config)) {
  std::mt19937_64 rng(seed);
  auto conv = [&](std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                  bool bias) {
    Conv c;
    c.weight = kaiming<T>(rng, {out, in, k, k}, in * k * k);
    if (bias) c.bias = zeros<T>(out);
    c.options = {stride, k / 2};
    return c;
  };
  auto bn = [](std::size_t ch) {
    BatchNorm b;
    b.gamma = Var<T>(Tensor<T>({ch}, T(1)), true);
    b.beta = zeros<T>(ch);
    b.stats = {Tensor<T>({ch}), Tensor<T>({ch}, T(1))};
    return b;
  };
  auto linear = [&](std::size_t in, std::size_t out) {
    return Linear{kaiming<T>(rng, {out, in}, in), zeros<T>(out)};
  };

  stem_conv_ = conv(3, config_.ndf, 3, 2, false);
  stem_bn_ = bn(config_.ndf);
  std::size_t in = config_.ndf;
  for (std::size_t i = 0; i < config_.ndepth; ++i) {
    const std::size_t w = plan_.block_width[i], s = plan_.block_stride[i];
    Block b;
    b.conv1 = conv(in, w, 3, s, false);
    b.bn1 = bn(w);
    b.conv2 = conv(w, w, 3, 1, false);
    b.bn2 = bn(w);
    b.has_shortcut = s != 1 || in != w;
    if (b.has_shortcut) b.shortcut = conv(in, w, 1, s, false);
    blocks_.push_back(std::move(b));
    in = w;
  }
  for (std::size_t k = 0; k < 2; ++k) {
    const std::size_t src = plan_.block_width[plan_.local_block[k]];
    local_heads_[k].conv1 = conv(src, config_.nrkhs, 1, 1, true);
    local_heads_[k].conv2 = conv(config_.nrkhs, config_.nrkhs, 1, 1, true);
  }
  global_fc1_ = linear(in, config_.nrkhs);
  global_fc2_ = linear(config_.nrkhs, config_.nrkhs);
}

template <typename T>
Var<T> Encoder<T>::apply(const Conv& c, const Var<T>& x) const {
  return num::conv2d(x, c.weight, c.bias, c.options);
}

template <typename T>
Var<T> Encoder<T>::apply(BatchNorm& bn, const Var<T>& x, Mode mode) {
  return num::batch_norm(x, bn.gamma, bn.beta, bn.stats,
                         {mode == Mode::Train, 0.1, 1e-5});
}

template <typename T>
Var<T> Encoder<T>::run_block(Block& b, const Var<T>& x, Mode mode) {
  auto h = num::relu(apply(b.bn1, apply(b.conv1, x), mode));
  h = apply(b.bn2, apply(b.conv2, h), mode);
  const auto skip = b.has_shortcut ? apply(b.shortcut, x) : x;
  return num::relu(num::add(h, skip));
}

template <typename T>
Var<T> Encoder<T>::global_head(const Var<T>& top) {
  const auto pooled = num::global_avg_pool(top);
  const auto h = num::relu(num::linear(pooled, global_fc1_.weight, global_fc1_.bias));
  return num::linear(h, global_fc2_.weight, global_fc2_.bias);
}

template <typename T>
void Encoder<T>::check_input(const Var<T>& images, const char* op) const {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != s[3]) {
    throw ContractViolation(std::string(op) + ": expected [B,3,R,R] images, got " +
                            num::shape_str(s));
  }
}

template <typename T>
MultiScaleFeatures<T> Encoder<T>::encode(const Var<T>& images, Mode mode) {
  check_input(images, "encode");
  if (images.shape()[2] != config_.input_resolution) {
    throw ContractViolation("encode: resolution " + std::to_string(images.shape()[2]) +
                            " != configured " + std::to_string(config_.input_resolution));
  }
  auto h = num::relu(apply(stem_bn_, apply(stem_conv_, images), mode));
  std::array<Var<T>, 2> sources;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = run_block(blocks_[i], h, mode);
    for (std::size_t k = 0; k < 2; ++k) {
      if (plan_.local_block[k] == i) sources[k] = h;
    }
  }
  MultiScaleFeatures<T> out;
  out.global = global_head(h);
  std::array<Var<T>, 2> locals;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& head = local_heads_[k];
    const auto pooled = num::adaptive_avg_pool(sources[k], config_.local_scales[k]);
    locals[k] = apply(head.conv2, num::relu(apply(head.conv1, pooled)));
  }
  out.local_1 = locals[0];
  out.local_2 = locals[1];
  return out;
}

template <typename T>
Var<T> Encoder<T>::embed(const Var<T>& images, Mode mode) {
  check_input(images, "embed");
  if (images.shape()[2] < minimum_resolution()) {
    throw ContractViolation("embed: resolution " + std::to_string(images.shape()[2]) +
                            " below minimum " + std::to_string(minimum_resolution()));
  }
  auto h = num::relu(apply(stem_bn_, apply(stem_conv_, images), mode));
  for (auto& b : blocks_) h = run_block(b, h, mode);
  return global_head(h);
}

template <typename T>
template <typename F>
void Encoder<T>::for_each_tensor(F&& f) {
  // f(name, var, is_weight) for learnable tensors; f(name, tensor*) for buffers.
  auto conv = [&](const std::string& name, Conv& c) {
    f(name + ".w", c.weight, true);
    if (c.bias.defined()) f(name + ".b", c.bias, true);
  };
  auto bn = [&](const std::string& name, BatchNorm& b) {
    f(name + ".gamma", b.gamma, false);
    f(name + ".beta", b.beta, false);
    f(name + ".running_mean", &b.stats.running_mean);
    f(name + ".running_var", &b.stats.running_var);
  };
  conv("stem.conv", stem_conv_);
  bn("stem.bn", stem_bn_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "block" + std::to_string(i);
    conv(p + ".conv1", blocks_[i].conv1);
    bn(p + ".bn1", blocks_[i].bn1);
    conv(p + ".conv2", blocks_[i].conv2);
    bn(p + ".bn2", blocks_[i].bn2);
    if (blocks_[i].has_shortcut) conv(p + ".shortcut", blocks_[i].shortcut);
  }
  for (std::size_t k = 0; k < 2; ++k) {
    const std::string p = "local" + std::to_string(k + 1);
    conv(p + ".conv1", local_heads_[k].conv1);
    conv(p + ".conv2", local_heads_[k].conv2);
  }
  f("global.fc1.w", global_fc1_.weight, true);
  f("global.fc1.b", global_fc1_.bias, true);
  f("global.fc2.w", global_fc2_.weight, true);
  f("global.fc2.b", global_fc2_.bias, true);
}

namespace {

template <typename T>
struct Collect {
  std::vector<Var<T>>* out;
  bool weights_only;
  void operator()(const std::string&, Var<T>& v, bool is_weight) const {
    if (!weights_only || is_weight) out->push_back(v);
  }
  void operator()(const std::string&, Tensor<T>*) const {}
};

}  // namespace

template <typename T>
std::vector<Var<T>> Encoder<T>::parameters() const {
  std::vector<Var<T>> out;
  const_cast<Encoder*>(this)->for_each_tensor(Collect<T>{&out, false});
  return out;
}

template <typename T>
std::vector<Var<T>> Encoder<T>::weight_parameters() const {
  std::vector<Var<T>> out;
  const_cast<Encoder*>(this)->for_each_tensor(Collect<T>{&out, true});
  return out;
}

template <typename T>
std::size_t Encoder<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

namespace {

template <typename T>
struct Export {
  std::vector<num::NamedTensor>* out;
  void operator()(const std::string& name, Var<T>& v, bool) const {
    out->push_back({name, v.value().template cast<float>()});
  }
  void operator()(const std::string& name, Tensor<T>* t) const {
    out->push_back({name, t->template cast<float>()});
  }
};

template <typename T>
struct Import {
  const std::map<std::string, const Tensor<float>*>* in;
  std::size_t* used;
  const Tensor<float>& find(const std::string& name, const num::Shape& shape) const {
    const auto it = in->find(name);
    if (it == in->end()) throw IngestionError("encoder state: missing tensor '" + name + "'");
    if (it->second->shape() != shape) {
      throw IngestionError("encoder state: tensor '" + name + "' has shape " +
                           num::shape_str(it->second->shape()) + ", expected " +
                           num::shape_str(shape));
    }
    ++*used;
    return *it->second;
  }
  void operator()(const std::string& name, Var<T>& v, bool) const {
    v.mutable_value() = find(name, v.shape()).template cast<T>();
  }
  void operator()(const std::string& name, Tensor<T>* t) const {
    *t = find(name, t->shape()).template cast<T>();
  }
};

}  // namespace

template <typename T>
std::vector<num::NamedTensor> Encoder<T>::state() const {
  std::vector<num::NamedTensor> out;
  const_cast<Encoder*>(this)->for_each_tensor(Export<T>{&out});
  return out;
}

template <typename T>
void Encoder<T>::load_state(const std::vector<num::NamedTensor>& records) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& r : records) {
    if (!by_name.emplace(r.name, &r.tensor).second) {
      throw IngestionError("encoder state: duplicate tensor '" + r.name + "'");
    }
  }
  std::size_t used = 0;
  for_each_tensor(Import<T>{&by_name, &used});
  if (used != records.size()) {
    throw IngestionError("encoder state: " + std::to_string(records.size() - used) +
                         " unrecognized tensors");
  }
}

template class Encoder<float>;
template class Encoder<double>;

void save_encoder(const Encoder<float>& encoder, const std::filesystem::path& path) {
  num::write_checkpoint(path, encoder.state());
  std::ofstream cfg(path.string() + ".cfg", std::ios::trunc);
  if (!cfg) throw IngestionError("cannot write " + path.string() + ".cfg");
  cfg << encoder_config_to_text(encoder.config());
}

Encoder<float> load_encoder(const std::filesystem::path& path) {
  std::ifstream cfg(path.string() + ".cfg");
  if (!cfg) throw IngestionError("missing encoder sidecar " + path.string() + ".cfg");
  std::stringstream text;
  text << cfg.rdbuf();
  Encoder<float> enc(encoder_config_from_text(text.str()), 0);
  enc.load_state(num::read_checkpoint(path));
  return enc;
}

}  // namespace protofew
