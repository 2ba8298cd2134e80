// core/include/mgf/encoder.hpp
//
// The network: conv stem, bidirectional pre-norm Transformer encoder,
// waveform-reconstruction decoder, per-kind frame-feature heads, and the
// L2-normalized sentence projection head. All forward functions build
// autodiff graphs over the model's named parameter leaves.

#ifndef MGF_ENCODER_HPP_
#define MGF_ENCODER_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mgf/autodiff.hpp"
#include "mgf/dsp.hpp"

namespace mgf::encoder {

struct EncoderConfig {
  int64_t stem_kernel = 320;
  int64_t stem_stride = 160;
  int64_t stem_pad = 80;
  int64_t stem_channels = 64;  // paper-ratio default 512
  int64_t d_model = 64;        // paper-ratio default 768
  int64_t heads = 4;           // paper-ratio default 12
  int64_t encoder_blocks = 2;  // paper-ratio default 6
  int64_t decoder_blocks = 2;  // paper-ratio default 4

  int64_t d_ff() const { return 4 * d_model; }
  void validate() const;
};

// Frame-feature target kinds; one independent head per kind.
enum class TargetKind { kLps25, kLps400, kMfcc25, kMfcc400 };

inline constexpr std::array<TargetKind, 4> kAllTargetKinds = {
    TargetKind::kLps25, TargetKind::kLps400, TargetKind::kMfcc25,
    TargetKind::kMfcc400};

const char* target_kind_name(TargetKind kind);  // "lps25", "lps400", ...
int64_t target_dim(TargetKind kind);            // 257, 4097, 13, 13

// Analysis parameters per kind (frame length in samples, fft size, mel/cep
// counts for the MFCC kinds).
struct TargetAnalysis {
  int64_t frame_len = 400;
  int64_t fft_size = 512;
  int64_t n_mels = 40;
  int64_t n_ceps = 13;
  bool mfcc = false;
};
TargetAnalysis target_analysis(TargetKind kind);

struct Model {
  EncoderConfig cfg;
  std::map<std::string, ad::Tensor> params;  // sorted by name

  const ad::Tensor& p(const std::string& name) const;
};

// Fresh model; every tensor drawn from a stream derived from (seed, name),
// so the layout of the parameter map never affects the values.
Model init_model(const EncoderConfig& cfg, uint64_t seed);

// Drops accumulated gradients on all parameters.
void zero_grads(Model& model);

// Total parameter count.
int64_t param_count(const Model& model);

// Sinusoidal position table, [n_frames x d_model].
Array positional_encoding(int64_t n_frames, int64_t d_model);

// Waveform as a [len x 1] constant graph input.
ad::Tensor waveform_input(const dsp::Waveform& wave);

// conv(320,160,80) -> pointwise conv -> ReLU; [len x 1] -> [T x stem_channels].
ad::Tensor stem_forward(const ad::Tensor& wave_col, const Model& m);

// Alignment to d_model, positional add, then encoder_blocks of pre-norm
// self-attention + feed-forward. No trailing norm: zeroed block weights make
// this the identity on the positional-encoded input.
ad::Tensor encode(const ad::Tensor& stem_out, const Model& m);

// Positional add, decoder_blocks, then transposed conv back to samples;
// [T x d_model] -> [160*T x 1].
ad::Tensor decode_waveform(const ad::Tensor& rep, const Model& m);

// Two conv layers (kernel 3, same padding, ReLU between) to the kind's
// feature dimension; heads share no parameters across kinds.
ad::Tensor head_frame_features(const ad::Tensor& rep, TargetKind kind,
                               const Model& m);

// Mean pool over frames, two pointwise layers with ReLU between, then L2
// normalization; [T x d_model] -> [1 x d_model], unit norm.
ad::Tensor head_sentence(const ad::Tensor& rep, const Model& m);

// Clean (unmasked, unaugmented) representation of a waveform; plain values
// for probes and caching.
Array representation_of(const dsp::Waveform& wave, const Model& m);

}  // namespace mgf::encoder

#endif  // MGF_ENCODER_HPP_
