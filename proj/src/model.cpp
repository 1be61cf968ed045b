// src/model.cpp

// Copyright 2026  The xpn Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "xpn/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <unordered_set>

#include "xpn/binary_io.hpp"
#include "xpn/kernels.hpp"

namespace xpn {

namespace {

Parameter uniform_param(std::string name, Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return Parameter(std::move(name), std::move(t));
}

const char* activation_name(Activation a) { return a == Activation::kRelu ? "relu" : "sigmoid"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// row (1 x d) times W (d x n), appended to out
void row_times(std::span<const double> row, const Tensor& w, std::vector<double>& out) {
  const std::size_t n = w.cols();
  const std::size_t base = out.size();
  out.resize(base + n);
  kernels::serial::gemm_nn({1, row.size(), n}, row, w.data(), std::span<double>(out).subspan(base, n), false);
}

}  // namespace

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.d_model = 512;
  c.d_ff = 2048;
  c.n_enc = 3;
  c.n_dec = 3;
  c.dyn_expansion = 16;
  c.groups = {32, 64, 128, 256, 512};
  c.heads = 8;
  c.vocab_size = 10000;
  c.max_caption_len = 22;
  c.feature_dim = 1536;
  c.toy_patch = 0;
  return c;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw ConfigError("unknown model preset '" + name + "' (expected paper or desk)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string("model config: ") + what + " must be positive");
  };
  positive(d_model, "d_model");
  positive(d_ff, "d_ff");
  positive(n_enc, "n_enc");
  positive(n_dec, "n_dec");
  positive(dyn_expansion, "dyn_expansion");
  positive(heads, "heads");
  positive(feature_dim, "feature_dim");
  if (groups.empty()) throw ConfigError("model config: groups must not be empty");
  for (auto g : groups) positive(g, "every group length");
  if (d_model % heads != 0)
    throw ConfigError("model config: heads (" + std::to_string(heads) + ") must divide d_model (" +
                      std::to_string(d_model) + ")");
  if (vocab_size <= static_cast<std::size_t>(kNumReserved))
    throw ConfigError("model config: vocab_size must exceed the 4 reserved ids");
  if (max_caption_len < 2) throw ConfigError("model config: max_caption_len must be >= 2");
  if (toy_patch > 0 && feature_dim != 3 * toy_patch)
    throw ConfigError("model config: toy backbone with patch " + std::to_string(toy_patch) +
                      " produces feature_dim " + std::to_string(3 * toy_patch) + ", not " +
                      std::to_string(feature_dim));
  if (!(expansion_eps > 0.0)) throw ConfigError("model config: expansion_eps must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d_model", d_model},
          {"d_ff", d_ff},
          {"n_enc", n_enc},
          {"n_dec", n_dec},
          {"dyn_expansion", dyn_expansion},
          {"groups", groups},
          {"heads", heads},
          {"vocab_size", vocab_size},
          {"max_caption_len", max_caption_len},
          {"feature_dim", feature_dim},
          {"toy_patch", toy_patch},
          {"expansion_eps", expansion_eps},
          {"ff_activation", activation_name(ff_activation)}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("preset")) c = preset(j.at("preset").get<std::string>());
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("d_model", c.d_model);
    get("d_ff", c.d_ff);
    get("n_enc", c.n_enc);
    get("n_dec", c.n_dec);
    get("dyn_expansion", c.dyn_expansion);
    get("groups", c.groups);
    get("heads", c.heads);
    get("vocab_size", c.vocab_size);
    get("max_caption_len", c.max_caption_len);
    get("feature_dim", c.feature_dim);
    get("toy_patch", c.toy_patch);
    get("expansion_eps", c.expansion_eps);
    if (j.contains("ff_activation")) c.ff_activation = parse_activation(j.at("ff_activation").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

Tensor VisualFeatures::to_tensor() const {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < data.size(); ++i) t[i] = static_cast<double>(data[i]);
  return t;
}

VisualFeatures VisualFeatures::from_tensor(std::string id, const Tensor& t) {
  VisualFeatures f{std::move(id), t.rows(), t.cols(), {}};
  f.data.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) f.data[i] = static_cast<float>(t[i]);
  return f;
}

Tensor toy_backbone_pool(const Image& image, std::size_t patch) {
  if (patch == 0 || image.height == 0 || image.width == 0 || image.height % patch != 0 ||
      image.width % patch != 0)
    throw DimensionError("toy_backbone: image " + std::to_string(image.height) + "x" +
                         std::to_string(image.width) + " is not divisible by patch " + std::to_string(patch));
  if (image.rgb.size() != image.height * image.width * 3)
    throw DimensionError("toy_backbone: pixel buffer has wrong size");
  const std::size_t ph = image.height / patch, pw = image.width / patch;
  Tensor out({ph * pw, 3 * patch});
  for (std::size_t py = 0; py < ph; ++py)
    for (std::size_t px = 0; px < pw; ++px) {
      auto row = out.row(py * pw + px);
      for (std::size_t r = 0; r < patch; ++r)
        for (std::size_t c = 0; c < 3; ++c) {
          double s = 0.0;
          for (std::size_t x = 0; x < patch; ++x) s += image.at(py * patch + r, px * patch + x, c);
          row[r * 3 + c] = s / static_cast<double>(patch);
        }
    }
  return out;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.d_model, db = config_.feature_dim, V = config_.vocab_size;
  if (has_backbone()) {
    backbone_.weight = Parameter("backbone.weight", Tensor::identity(db));
    backbone_.bias = Parameter("backbone.bias", Tensor({db}));
  }
  input_weight_ = uniform_param("input.weight", {db, d}, db, rng);
  input_bias_ = Parameter("input.bias", Tensor({d}));
  for (std::size_t n = 0; n < config_.n_enc; ++n) {
    encoder_.push_back(make_encoder_layer("enc" + std::to_string(n), d, config_.d_ff, config_.groups, rng));
    encoder_.back().expansion.eps = config_.expansion_eps;
    encoder_.back().ff.activation = config_.ff_activation;
  }
  for (std::size_t n = 0; n < config_.n_dec; ++n) {
    decoder_.push_back(
        make_decoder_layer("dec" + std::to_string(n), d, config_.d_ff, config_.dyn_expansion, config_.heads, rng));
    decoder_.back().expansion.eps = config_.expansion_eps;
    decoder_.back().ff.activation = config_.ff_activation;
  }
  embedding_ = uniform_param("embedding", {V, d}, d, rng);
  classifier_weight_ = uniform_param("classifier.weight", {d, V}, d, rng);
  classifier_bias_ = Parameter("classifier.bias", Tensor({V}));
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  if (has_backbone()) out = backbone_.parameters();
  out.push_back(&input_weight_);
  out.push_back(&input_bias_);
  for (auto& l : encoder_)
    for (auto* p : l.parameters()) out.push_back(p);
  for (auto& l : decoder_)
    for (auto* p : l.parameters()) out.push_back(p);
  out.push_back(&embedding_);
  out.push_back(&classifier_weight_);
  out.push_back(&classifier_bias_);
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  auto ps = const_cast<Model*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::vector<Parameter*> Model::backbone_parameters() {
  if (!has_backbone()) return {};
  return backbone_.parameters();
}

std::vector<Parameter*> Model::trainable_parameters(bool backbone_frozen) {
  auto all = parameters();
  if (!backbone_frozen || !has_backbone()) return all;
  return {all.begin() + 2, all.end()};
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

Parameter* Model::find(const std::string& name) {
  for (auto* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

Var Model::backbone(Tape& tape, Var pooled) const {
  if (!has_backbone()) throw ConfigError("model has no toy backbone");
  if (pooled.cols() != config_.feature_dim)
    throw DimensionError("backbone: pooled width " + std::to_string(pooled.cols()) + ", expected " +
                         std::to_string(config_.feature_dim));
  return add(matmul(pooled, tape.param(backbone_.weight)), tape.param(backbone_.bias));
}

VisualFeatures Model::extract_features(const Image& image, const std::string& id) const {
  Tape tape(false);
  Var out = backbone(tape, tape.constant(toy_backbone_pool(image, config_.toy_patch)));
  return VisualFeatures::from_tensor(id, out.value());
}

Var Model::input_projection(Tape& tape, Var features) const {
  if (features.value().rank() != 2 || features.cols() != config_.feature_dim || features.rows() == 0)
    throw DimensionError("input_projection: features " + shape_str(features.shape()) + " but d_b is " +
                         std::to_string(config_.feature_dim));
  return add(matmul(features, tape.param(input_weight_)), tape.param(input_bias_));
}

Var Model::encode(Tape& tape, Var features) const {
  Var x = input_projection(tape, features);
  for (const auto& l : encoder_) x = encoder_layer(tape, l, x);
  return x;
}

Tensor Model::encode_features(const VisualFeatures& f) const {
  Tape tape(false);
  return encode(tape, tape.constant(f.to_tensor())).value();
}

void Model::check_tokens(std::span<const int> tokens) const {
  if (tokens.empty() || tokens.front() != kBosId) throw ConfigError("decoder input must start with BOS");
  if (tokens.size() > config_.max_caption_len)
    throw ConfigError("decoder input of length " + std::to_string(tokens.size()) + " exceeds max_caption_len " +
                      std::to_string(config_.max_caption_len));
  for (int t : tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size)
      throw ConfigError("token id " + std::to_string(t) + " outside vocabulary of size " +
                        std::to_string(config_.vocab_size));
}

Tensor positional_encoding(std::size_t first, std::size_t count, std::size_t d) {
  Tensor pe({count, d});
  for (std::size_t r = 0; r < count; ++r) {
    const double pos = static_cast<double>(first + r);
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      pe.at(r, i) = std::sin(pos * freq);
      if (i + 1 < d) pe.at(r, i + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

Var Model::embed(Tape& tape, std::span<const int> tokens, std::size_t first_position) const {
  const std::size_t d = config_.d_model;
  Var e = scale(gather_rows(tape.param(embedding_), tokens), std::sqrt(static_cast<double>(d)));
  return add(e, tape.constant(positional_encoding(first_position, tokens.size(), d)));
}

Var Model::decode_train(Tape& tape, std::span<const int> tokens, Var enc) const {
  check_tokens(tokens);
  Var y = embed(tape, tokens, 0);
  for (const auto& l : decoder_) y = decoder_layer(tape, l, y, enc, true);
  return add(matmul(y, tape.param(classifier_weight_)), tape.param(classifier_bias_));
}

Tensor Model::decode_step(std::span<const int> prefix, const Tensor& enc) const {
  Tape tape(false);
  const Tensor logits = decode_train(tape, prefix, tape.constant(enc)).value();
  const std::size_t V = logits.cols();
  Tensor last({V});
  std::copy_n(logits.row(logits.rows() - 1).begin(), V, last.data().begin());
  return last;
}

DecoderState Model::start_decoding(const Tensor& enc) const {
  DecoderState s;
  Tape tape(false);
  Var e = tape.constant(enc);
  for (const auto& l : decoder_) {
    DecoderState::Layer cache;
    cache.enc_key = matmul(e, tape.param(l.attention.w_key)).value();
    cache.enc_value = matmul(e, tape.param(l.attention.w_value)).value();
    s.layers.push_back(std::move(cache));
  }
  return s;
}

Tensor Model::decode_step(DecoderState& state, int token) const {
  const std::size_t d = config_.d_model, ne = config_.dyn_expansion;
  std::vector<int> next = state.prefix;
  next.push_back(token);
  check_tokens(next);
  if (state.layers.size() != decoder_.size()) throw ConfigError("decoder state does not match the model");
  const std::size_t t = state.prefix.size();  // position of `token`
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  Tape tape(false);
  const int tok[] = {token};
  Tensor y = embed(tape, tok, t).value();  // 1 x d
  for (std::size_t li = 0; li < decoder_.size(); ++li) {
    const DecoderLayerParams& l = decoder_[li];
    DecoderState::Layer& c = state.layers[li];
    const DynamicExpansionParams& ex = l.expansion;

    // Expansion for the newest position only.
    const Tensor x = layer_norm(tape, l.norm_expansion, tape.constant(y)).value();
    std::vector<double> cond, sel;
    row_times(x.data(), ex.w_cond.value, cond);
    row_times(x.data(), ex.w_select.value, sel);
    row_times(x.data(), ex.w_key.value, c.key);
    row_times(x.data(), ex.w_value1.value, c.value1);
    row_times(x.data(), ex.w_value2.value, c.value2);
    const std::size_t L = t + 1;
    std::vector<double> w(L);
    for (std::size_t k = 0; k < ne; ++k) {
      std::vector<double> q(d), b(d);
      for (std::size_t j = 0; j < d; ++j) {
        q[j] = cond[j] + ex.query.value.at(k, j);
        b[j] = cond[j] + ex.bias.value.at(k, j);
      }
      c.query.insert(c.query.end(), q.begin(), q.end());
      for (int path = 0; path < 2; ++path) {
        const double sign = path == 0 ? -1.0 : 1.0;
        const auto& vals = path == 0 ? c.value1 : c.value2;
        auto& expanded = path == 0 ? c.expanded1 : c.expanded2;
        double total = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          w[j] = std::max(0.0, sign * (dot(q.data(), &c.key[j * d], d) * inv_sqrt_d));
          total += w[j];
        }
        std::vector<double> f(b);
        std::vector<double> acc(d, 0.0);
        for (std::size_t j = 0; j < L; ++j) {
          const double a = w[j] / (total + ex.eps);
          for (std::size_t z = 0; z < d; ++z) acc[z] += a * vals[j * d + z];
        }
        for (std::size_t z = 0; z < d; ++z) f[z] = acc[z] + b[z];
        expanded.insert(expanded.end(), f.begin(), f.end());
      }
    }
    const std::size_t rows = L * ne;
    const double* key_t = &c.key[t * d];
    std::vector<double> m(rows);
    for (std::size_t r = 0; r < rows; ++r) m[r] = dot(&c.query[r * d], key_t, d) * inv_sqrt_d;
    Tensor out({1, d});
    for (std::size_t z = 0; z < d; ++z) out[z] = 0.0;
    std::vector<double> back[2] = {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (int path = 0; path < 2; ++path) {
      const double sign = path == 0 ? -1.0 : 1.0;
      const auto& expanded = path == 0 ? c.expanded1 : c.expanded2;
      double total = 0.0;
      for (std::size_t r = 0; r < rows; ++r) total += std::max(0.0, sign * m[r]);
      for (std::size_t r = 0; r < rows; ++r) {
        const double a = std::max(0.0, sign * m[r]) / (total + ex.eps);
        for (std::size_t z = 0; z < d; ++z) back[path][z] += a * expanded[r * d + z];
      }
    }
    for (std::size_t z = 0; z < d; ++z) {
      const double g = 1.0 / (1.0 + std::exp(-sel[z]));
      out[z] = g * back[0][z] + (1.0 - g) * back[1][z];
    }
    Var bvar = add(tape.constant(y), tape.constant(std::move(out)));

    // Cross-attention against the cached encoder keys/values, then FF.
    Var q = matmul(layer_norm(tape, l.norm_attention, bvar), tape.param(l.attention.w_query));
    Var att = attend_heads(q, tape.constant(c.enc_key), tape.constant(c.enc_value), l.attention.heads);
    Var wvar = add(bvar, matmul(att, tape.param(l.attention.w_out)));
    y = add(wvar, feed_forward(tape, l.ff, layer_norm(tape, l.norm_ff, wvar))).value();
  }
  state.prefix = std::move(next);
  Var logits = add(matmul(tape.constant(y), tape.param(classifier_weight_)), tape.param(classifier_bias_));
  Tensor last({config_.vocab_size});
  std::copy(logits.value().data().begin(), logits.value().data().end(), last.data().begin());
  return last;
}

std::size_t parameter_count_formula(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ff, db = c.feature_dim, V = c.vocab_size;
  std::size_t T = 0;
  for (auto g : c.groups) T += g;
  const std::size_t ln = 2 * d;
  const std::size_t ff = d * f + f + f * d + d;
  const std::size_t enc = 2 * ln + (2 * T * d + 4 * d * d) + ff;
  const std::size_t dec = 3 * ln + (2 * c.dyn_expansion * d + 5 * d * d) + 4 * d * d + ff;
  const std::size_t backbone = c.toy_patch > 0 ? db * db + db : 0;
  return backbone + (db * d + d) + c.n_enc * enc + c.n_dec * dec + V * d + (d * V + V);
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& meta) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic, 4);
  io::write_u32(os, kCheckpointVersion);
  const std::string header = nlohmann::json{{"config", model.config().to_json()}, {"meta", meta}}.dump();
  io::write_u64(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  const auto params = model.parameters();
  io::write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    io::write_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    io::write_u32(os, static_cast<std::uint32_t>(p->value.rank()));
    for (auto e : p->value.shape()) io::write_u64(os, e);
    for (double v : p->value.data()) io::write_f64(os, v);
  }
  if (!os) throw Error("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFoundError("checkpoint not found: " + path.string());
  const std::string magic = io::read_bytes(is, 4, "magic");
  if (magic != std::string(kCheckpointMagic, 4)) throw FormatError(path.string() + " is not a model checkpoint");
  const std::uint32_t version = io::read_u32(is, "version");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t header_len = io::read_u64(is, "header length");
  if (header_len > (1u << 30)) throw FormatError("checkpoint header length is implausible");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(io::read_bytes(is, header_len, "header"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  Model model(ModelConfig::from_json(header.at("config")), 0);
  if (meta) *meta = header.value("meta", nlohmann::json::object());
  auto params = model.parameters();
  const std::uint32_t count = io::read_u32(is, "parameter count");
  if (count != params.size())
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(params.size()));
  std::unordered_set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = io::read_u32(is, "name length");
    if (name_len > 4096) throw FormatError("parameter name length is implausible");
    const std::string name = io::read_bytes(is, name_len, "parameter name");
    Parameter* p = model.find(name);
    if (!p || !seen.insert(name).second) throw FormatError("unexpected parameter '" + name + "' in checkpoint");
    const std::uint32_t rank = io::read_u32(is, "rank");
    Shape shape(rank);
    for (auto& e : shape) e = io::read_u64(is, "extent");
    if (shape != p->value.shape())
      throw FormatError("parameter '" + name + "' has shape " + shape_str(shape) + ", expected " +
                        shape_str(p->value.shape()));
    for (auto& v : p->value.data()) v = io::read_f64(is, "payload");
  }
  return model;
}

}  // namespace xpn
