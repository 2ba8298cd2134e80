// core/src/encoder.cc

#include "mgf/encoder.hpp"

#include <cmath>

#include "mgf/error.hpp"
#include "mgf/rng.hpp"

namespace mgf::encoder {

namespace ad = mgf::ad;

void EncoderConfig::validate() const {
  if (stem_kernel < 1 || stem_stride < 1 || stem_pad < 0 ||
      stem_channels < 1 || d_model < 1 || heads < 1 || encoder_blocks < 1 ||
      decoder_blocks < 1)
    throw Error("encoder config: all counts must be at least 1");
  if (d_model % heads != 0)
    throw Error("encoder config: d_model " + std::to_string(d_model) +
                " not divisible by heads " + std::to_string(heads));
}

const char* target_kind_name(TargetKind kind) {
  switch (kind) {
    case TargetKind::kLps25: return "lps25";
    case TargetKind::kLps400: return "lps400";
    case TargetKind::kMfcc25: return "mfcc25";
    case TargetKind::kMfcc400: return "mfcc400";
  }
  throw Error("unknown feature kind");
}

TargetAnalysis target_analysis(TargetKind kind) {
  TargetAnalysis a;
  switch (kind) {
    case TargetKind::kLps25:
      a = {400, 512, 40, 13, false};
      break;
    case TargetKind::kLps400:
      a = {6400, 8192, 40, 13, false};
      break;
    case TargetKind::kMfcc25:
      a = {400, 512, 40, 13, true};
      break;
    case TargetKind::kMfcc400:
      a = {6400, 8192, 40, 13, true};
      break;
  }
  return a;
}

int64_t target_dim(TargetKind kind) {
  TargetAnalysis a = target_analysis(kind);
  return a.mfcc ? a.n_ceps : a.fft_size / 2 + 1;
}

const ad::Tensor& Model::p(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw Error("unknown parameter " + name);
  return it->second;
}

namespace {

// Every parameter gets its own stream derived from (seed, name).
void add_param(Model& m, uint64_t seed, const std::string& name,
               std::vector<int64_t> shape, double stddev) {
  Rng rng(derive_seed(seed, name));
  Array value = stddev == 0.0 ? Array(shape)
                              : Array::random_normal(shape, stddev, rng);
  m.params[name] = ad::leaf(std::move(value));
}

void add_ones(Model& m, const std::string& name, int64_t n) {
  m.params[name] = ad::leaf(Array::full({n}, 1.0));
}

void add_block_params(Model& m, uint64_t seed, const std::string& prefix,
                      const EncoderConfig& cfg) {
  int64_t d = cfg.d_model, ff = cfg.d_ff();
  double sd = 1.0 / std::sqrt(static_cast<double>(d));
  double sf = 1.0 / std::sqrt(static_cast<double>(ff));
  add_ones(m, prefix + ".ln1.g", d);
  add_param(m, seed, prefix + ".ln1.b", {d}, 0.0);
  for (const char* w : {"wq", "wk", "wv", "wo"})
    add_param(m, seed, prefix + ".attn." + std::string(w), {d, d}, sd);
  // No key bias: softmax rows are invariant to a shared key offset, so it
  // would be a dead parameter.
  for (const char* b : {"bq", "bv", "bo"})
    add_param(m, seed, prefix + ".attn." + std::string(b), {d}, 0.0);
  add_ones(m, prefix + ".ln2.g", d);
  add_param(m, seed, prefix + ".ln2.b", {d}, 0.0);
  add_param(m, seed, prefix + ".ff.w1", {d, ff}, sd);
  add_param(m, seed, prefix + ".ff.b1", {ff}, 0.0);
  add_param(m, seed, prefix + ".ff.w2", {ff, d}, sf);
  add_param(m, seed, prefix + ".ff.b2", {d}, 0.0);
}

constexpr double kLnEps = 1e-5;

// Pre-norm LN with learned gain/bias.
ad::Tensor layer_norm(const ad::Tensor& x, const Model& m,
                      const std::string& prefix) {
  return ad::add_rowvec(
      ad::mul_rowvec(ad::layer_norm_rows(x, kLnEps), m.p(prefix + ".g")),
      m.p(prefix + ".b"));
}

ad::Tensor self_attention(const ad::Tensor& x, const Model& m,
                          const std::string& prefix) {
  int64_t d = m.cfg.d_model, h = m.cfg.heads, dh = d / h;
  auto q = ad::add_rowvec(ad::matmul(x, m.p(prefix + ".wq")),
                          m.p(prefix + ".bq"));
  auto k = ad::matmul(x, m.p(prefix + ".wk"));
  auto v = ad::add_rowvec(ad::matmul(x, m.p(prefix + ".wv")),
                          m.p(prefix + ".bv"));
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Tensor> heads_out;
  heads_out.reserve(static_cast<size_t>(h));
  for (int64_t i = 0; i < h; ++i) {
    auto qh = ad::slice_cols(q, i * dh, dh);
    auto kh = ad::slice_cols(k, i * dh, dh);
    auto vh = ad::slice_cols(v, i * dh, dh);
    auto scores = ad::mul_scalar(ad::matmul(qh, ad::transpose(kh)), scale);
    heads_out.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  auto merged = h == 1 ? heads_out[0] : ad::concat_cols(heads_out);
  return ad::add_rowvec(ad::matmul(merged, m.p(prefix + ".wo")),
                        m.p(prefix + ".bo"));
}

ad::Tensor feed_forward(const ad::Tensor& x, const Model& m,
                        const std::string& prefix) {
  auto h = ad::gelu(ad::add_rowvec(ad::matmul(x, m.p(prefix + ".w1")),
                                   m.p(prefix + ".b1")));
  return ad::add_rowvec(ad::matmul(h, m.p(prefix + ".w2")),
                        m.p(prefix + ".b2"));
}

ad::Tensor transformer_block(const ad::Tensor& x, const Model& m,
                             const std::string& prefix) {
  auto a = ad::add(x, self_attention(layer_norm(x, m, prefix + ".ln1"), m,
                                     prefix + ".attn"));
  return ad::add(a, feed_forward(layer_norm(a, m, prefix + ".ln2"), m,
                                 prefix + ".ff"));
}

ad::Tensor positional_add(const ad::Tensor& x, const Model& m) {
  return ad::add(
      x, ad::constant(positional_encoding(x->value.dim(0), m.cfg.d_model)));
}

}  // namespace

Model init_model(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  int64_t sc = cfg.stem_channels, d = cfg.d_model;
  add_param(m, seed, "stem.conv.w", {cfg.stem_kernel, sc},
            1.0 / std::sqrt(static_cast<double>(cfg.stem_kernel)));
  add_param(m, seed, "stem.conv.b", {sc}, 0.0);
  add_param(m, seed, "stem.point.w", {sc, sc},
            1.0 / std::sqrt(static_cast<double>(sc)));
  add_param(m, seed, "stem.point.b", {sc}, 0.0);
  add_param(m, seed, "align.w", {sc, d},
            1.0 / std::sqrt(static_cast<double>(sc)));
  add_param(m, seed, "align.b", {d}, 0.0);
  for (int64_t i = 0; i < cfg.encoder_blocks; ++i)
    add_block_params(m, seed, "enc" + std::to_string(i), cfg);
  for (int64_t i = 0; i < cfg.decoder_blocks; ++i)
    add_block_params(m, seed, "dec" + std::to_string(i), cfg);
  add_param(m, seed, "dec.out.w", {d, cfg.stem_kernel},
            1.0 / std::sqrt(static_cast<double>(2 * d)));
  add_param(m, seed, "dec.out.b", {1}, 0.0);
  for (TargetKind kind : kAllTargetKinds) {
    std::string prefix = "head." + std::string(target_kind_name(kind));
    add_param(m, seed, prefix + ".conv1.w", {3 * d, d},
              1.0 / std::sqrt(static_cast<double>(3 * d)));
    add_param(m, seed, prefix + ".conv1.b", {d}, 0.0);
    add_param(m, seed, prefix + ".conv2.w", {3 * d, target_dim(kind)},
              1.0 / std::sqrt(static_cast<double>(3 * d)));
    add_param(m, seed, prefix + ".conv2.b", {target_dim(kind)}, 0.0);
  }
  add_param(m, seed, "head.sentence.w1", {d, d},
            1.0 / std::sqrt(static_cast<double>(d)));
  add_param(m, seed, "head.sentence.b1", {d}, 0.0);
  add_param(m, seed, "head.sentence.w2", {d, d},
            1.0 / std::sqrt(static_cast<double>(d)));
  add_param(m, seed, "head.sentence.b2", {d}, 0.0);
  return m;
}

void zero_grads(Model& model) {
  for (auto& [name, t] : model.params) {
    t->has_grad = false;
    t->grad = Array();
  }
}

int64_t param_count(const Model& model) {
  int64_t n = 0;
  for (const auto& [name, t] : model.params) n += t->value.numel();
  return n;
}

Array positional_encoding(int64_t n_frames, int64_t d_model) {
  Array pe({n_frames, d_model});
  for (int64_t t = 0; t < n_frames; ++t)
    for (int64_t i = 0; i < d_model; i += 2) {
      double rate = std::pow(10000.0, -static_cast<double>(i) /
                                          static_cast<double>(d_model));
      double ang = static_cast<double>(t) * rate;
      pe.at(t, i) = std::sin(ang);
      if (i + 1 < d_model) pe.at(t, i + 1) = std::cos(ang);
    }
  return pe;
}

ad::Tensor waveform_input(const dsp::Waveform& wave) {
  return ad::constant(Array({wave.size(), 1}, wave.samples));
}

ad::Tensor stem_forward(const ad::Tensor& wave_col, const Model& m) {
  const EncoderConfig& c = m.cfg;
  if (wave_col->value.dim(0) + 2 * c.stem_pad < c.stem_kernel)
    throw Error("input too short");
  auto h = ad::conv1d(wave_col, m.p("stem.conv.w"), m.p("stem.conv.b"),
                      c.stem_kernel, c.stem_stride, c.stem_pad);
  return ad::relu(ad::add_rowvec(ad::matmul(h, m.p("stem.point.w")),
                                 m.p("stem.point.b")));
}

ad::Tensor encode(const ad::Tensor& stem_out, const Model& m) {
  auto x = ad::add_rowvec(ad::matmul(stem_out, m.p("align.w")),
                          m.p("align.b"));
  x = positional_add(x, m);
  for (int64_t i = 0; i < m.cfg.encoder_blocks; ++i)
    x = transformer_block(x, m, "enc" + std::to_string(i));
  return x;
}

ad::Tensor decode_waveform(const ad::Tensor& rep, const Model& m) {
  auto x = positional_add(rep, m);
  for (int64_t i = 0; i < m.cfg.decoder_blocks; ++i)
    x = transformer_block(x, m, "dec" + std::to_string(i));
  return ad::conv_transpose1d(x, m.p("dec.out.w"), m.p("dec.out.b"),
                              m.cfg.stem_kernel, m.cfg.stem_stride,
                              m.cfg.stem_pad);
}

ad::Tensor head_frame_features(const ad::Tensor& rep, TargetKind kind,
                               const Model& m) {
  std::string prefix = "head." + std::string(target_kind_name(kind));
  auto h = ad::relu(ad::conv1d(rep, m.p(prefix + ".conv1.w"),
                               m.p(prefix + ".conv1.b"), 3, 1, 1));
  return ad::conv1d(h, m.p(prefix + ".conv2.w"), m.p(prefix + ".conv2.b"), 3,
                    1, 1);
}

ad::Tensor head_sentence(const ad::Tensor& rep, const Model& m) {
  int64_t t = rep->value.dim(0), d = rep->value.dim(1);
  if (t < 1) throw Error("empty representation");
  auto pooled = ad::mul_scalar(ad::reshape(ad::sum_cols(rep), {1, d}),
                               1.0 / static_cast<double>(t));
  auto h = ad::relu(ad::add_rowvec(ad::matmul(pooled, m.p("head.sentence.w1")),
                                   m.p("head.sentence.b1")));
  auto z = ad::add_rowvec(ad::matmul(h, m.p("head.sentence.w2")),
                          m.p("head.sentence.b2"));
  auto inv_norm =
      ad::powc(ad::add_scalar(ad::sum_all(ad::mul(z, z)), 1e-12), -0.5);
  return ad::scale(inv_norm, z);
}

Array representation_of(const dsp::Waveform& wave, const Model& m) {
  return encode(stem_forward(waveform_input(wave), m), m)->value;
}

}  // namespace mgf::encoder
