// core/include/mgf/objectives.hpp
//
// The four multi-granularity training objectives plus the pieces that feed
// them: masked-segment planning, crop sampling, waveform augmentation, and
// feature-target extraction. Losses are built as autodiff graphs so the
// trainer can backpropagate through them.

#ifndef MGF_OBJECTIVES_HPP_
#define MGF_OBJECTIVES_HPP_

#include <cstdint>
#include <map>
#include <vector>

#include "mgf/autodiff.hpp"
#include "mgf/corpus.hpp"
#include "mgf/dsp.hpp"
#include "mgf/encoder.hpp"

namespace mgf::objectives {

inline constexpr int64_t kSegmentFrames = 14;  // 140 ms of 10 ms frames
inline constexpr double kMaskBudget = 0.20;
inline constexpr int64_t kCropSamples = 32000;  // 2 s at 16 kHz

struct MaskPlan {
  std::vector<int64_t> segments;  // sorted segment start frames, each 14 long
  std::vector<int64_t> masked;    // sorted masked frame indices
  std::vector<int64_t> unmasked;  // sorted complement
  int64_t n_frames = 0;
  uint64_t seed = 0;
  bool too_short = false;  // n_frames < 14: empty plan, caller may warn
};

// Places non-overlapping (abutting allowed) 14-frame segments at uniform
// random starts until one more would push masked coverage past 20 % or 100
// consecutive placements collide. Deterministic under seed.
MaskPlan plan_masks(int64_t n_frames, uint64_t seed);

// Replaces each masked segment's sample range [160*s, 160*(s+14)) with a
// fresh noise draw (or zeros); all other samples are copied bit-identically.
dsp::Waveform apply_masks(const dsp::Waveform& crop, const MaskPlan& plan,
                          const corpus::NoiseBank& bank, uint64_t seed,
                          bool zero_fill = false);

struct CropPair {
  dsp::Waveform a;  // also the reconstruction/feature/phoneme crop
  dsp::Waveform b;
  int64_t offset_a = 0;  // sample offsets into the utterance, hop-aligned
  int64_t offset_b = 0;
  bool padded = false;  // utterance shorter than the crop: cyclic pad
};

// Two independent uniform crop offsets, drawn on the 160-sample hop grid so
// crop frames align with the utterance frame grid.
CropPair sample_crops(const corpus::Utterance& utt, int64_t crop_samples,
                      uint64_t seed);

struct AugmentOptions {
  double mask_ms_lo = 100.0;  // temporal-mask length range
  double mask_ms_hi = 200.0;
  double snr_db_lo = 5.0;  // additive-noise SNR range; +inf disables noise
  double snr_db_hi = 20.0;
};

// Temporal mask (one uniform segment zeroed) followed by additive noise at a
// uniformly drawn SNR. Zero-length mask plus infinite SNR is the identity.
dsp::Waveform augment(const dsp::Waveform& crop, const corpus::NoiseBank& bank,
                      uint64_t seed, const AugmentOptions& opt = {});

// Ground-truth regression targets for every feature kind, on the 10 ms frame
// grid of the given signal (frame_count_10ms rows each).
struct FeatureSet {
  std::map<encoder::TargetKind, Array> features;

  const Array& of(encoder::TargetKind kind) const;
};

FeatureSet compute_features(const dsp::Waveform& wave);

// Rows [start_frame, start_frame + n_frames) of one kind; with normalize the
// slice is standardized per dimension over its own frames.
Array feature_slice(const FeatureSet& set, encoder::TargetKind kind,
                    int64_t start_frame, int64_t n_frames, bool normalize);

// All four target kinds for one crop, sharing an FFT pass per analysis
// window size. Values match compute_features on the crop bit for bit.
std::map<encoder::TargetKind, Array> crop_targets(const dsp::Waveform& crop,
                                                  bool normalize);

struct SampleLossTrace {
  double alpha = 0.0;   // projection coefficient of the scaled target
  double sdr_db = 0.0;  // clamped SI-SDR of the reconstruction
};

// Negated SI-SDR of the reconstruction against the clean crop, built from
// graph ops so gradients reach the decoder. Matches dsp::si_sdr numerics.
ad::Tensor loss_sample(const ad::Tensor& recon, const dsp::Waveform& target,
                       SampleLossTrace* trace = nullptr);

// Mean over unmasked frames of the weighted squared feature residuals,
// summed across kinds. Missing weight entries default to 1.
ad::Tensor loss_frame(
    const std::map<encoder::TargetKind, ad::Tensor>& predictions,
    const std::map<encoder::TargetKind, Array>& targets,
    const std::map<encoder::TargetKind, double>& weights,
    const std::vector<int64_t>& unmasked,
    std::map<encoder::TargetKind, double>* per_kind_trace = nullptr);

// InfoNCE over masked frames: anchors [m x d] from the masked pass,
// positives [m x d] from the clean pass, negatives [m*k x d] (k per anchor,
// clean-pass frames of other sentences). Positive term included in the
// denominator; uniform similarities give ln(k + 1).
ad::Tensor loss_phoneme(const ad::Tensor& anchors, const ad::Tensor& positives,
                        const ad::Tensor& negatives, int64_t k, double tau);

// NT-Xent over 2N unit projections, positives paired 2b <-> 2b+1; denominator
// excludes self and keeps the positive (2N-1 terms). Uniform similarities
// give ln(2N - 1).
ad::Tensor loss_sentence(const ad::Tensor& z, double tau);

struct LossWeights {
  double sample = 1.0;
  double frame = 1.0;
  double phoneme = 1.0;
  double sentence = 1.0;
};

struct LossReport {
  double l_sample = 0.0;
  double l_frame = 0.0;
  double l_phoneme = 0.0;
  double l_sentence = 0.0;
  double l_total = 0.0;
  double alpha = 0.0;  // from SampleLossTrace
  std::map<encoder::TargetKind, double> frame_terms;
  LossWeights lambda;
};

// Weighted sum of the present components (null tensors contribute exactly
// zero). Rejects non-finite components by name. Fills the report's loss
// fields; the caller owns the trace fields.
ad::Tensor total_loss(const ad::Tensor& sample, const ad::Tensor& frame,
                      const ad::Tensor& phoneme, const ad::Tensor& sentence,
                      const LossWeights& lambda, LossReport* report = nullptr);

}  // namespace mgf::objectives

#endif  // MGF_OBJECTIVES_HPP_
