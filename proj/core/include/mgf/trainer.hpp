// core/include/mgf/trainer.hpp
//
// The pretraining loop: batch assembly, the two encoder passes, the combined
// loss, Adam with linear warmup and power-law decay, gradient clipping,
// epoch checkpointing, and the MGF1 checkpoint format.

#ifndef MGF_TRAINER_HPP_
#define MGF_TRAINER_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mgf/corpus.hpp"
#include "mgf/encoder.hpp"
#include "mgf/objectives.hpp"

namespace mgf::trainer {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;
inline constexpr double kClipNorm = 5.0;

struct AblationFlags {
  bool drop_sample = false;
  bool drop_frame = false;
  bool drop_phoneme = false;
  bool drop_sentence = false;
  bool generative_phoneme = false;  // L1 between the two passes instead of
                                    // the contrastive phoneme loss
};

// Per-kind weights on the frame-feature residuals.
struct FrameWeights {
  double lps25 = 1.0;
  double lps400 = 1.0;
  double mfcc25 = 1.0;
  double mfcc400 = 1.0;

  std::map<encoder::TargetKind, double> as_map() const;
};

struct TrainConfig {
  encoder::EncoderConfig model;
  double base_lr = 1e-3;
  int64_t warmup_steps = 500;
  double decay_exponent = 0.3;
  int64_t batch_size = 8;
  int64_t epochs = 50;
  uint64_t seed = 0;
  objectives::LossWeights lambda;
  FrameWeights frame_weights;
  double tau_phoneme = 0.1;
  double tau_sentence = 0.1;
  int64_t negatives = 32;  // per anchor
  int64_t crop_samples = objectives::kCropSamples;
  bool zero_fill_masks = false;    // zeros instead of noise in masked spans
  bool normalize_targets = true;   // standardize feature targets per crop
  objectives::AugmentOptions augment;
  AblationFlags ablation;

  void validate() const;
};

struct TrainState {
  encoder::Model model;
  std::map<std::string, Array> m1;  // Adam first moments, keyed like params
  std::map<std::string, Array> m2;  // Adam second moments
  int64_t step = 0;
  uint64_t run_seed = 0;  // all per-step randomness derives from (this, step)
};

// Fresh state with derived-seed parameter init and zeroed moments.
TrainState init_state(const TrainConfig& cfg);

// base_lr * step/warmup through warmup, then base_lr * (step/warmup)^-decay.
double lr_schedule(int64_t step, const TrainConfig& cfg);

// One bias-corrected Adam update (step is 1-based). grad may be empty to
// mean an all-zero gradient; grad_scale carries the clipping factor.
void adam_update(Array& value, const Array& grad, double grad_scale,
                 Array& m1, Array& m2, int64_t step, double lr);

// One optimizer step over a batch of utterances. Deterministic given
// (state, batch, cfg). Throws without touching state if any loss component
// is non-finite.
objectives::LossReport train_step(
    const std::vector<const corpus::Utterance*>& batch, TrainState& state,
    const TrainConfig& cfg, const corpus::NoiseBank& bank);

// Epoch loop with seeded shuffling. Writes <out_dir>/train_log.csv and
// updates <out_dir>/checkpoint_last.mgf after every epoch; returns the
// checkpoint path. With resume_from, continues that checkpoint's run.
std::string pretrain(const corpus::Corpus& corpus, const TrainConfig& cfg,
                     const std::string& out_dir,
                     const std::string& resume_from = "");

struct Checkpoint {
  TrainState state;
  TrainConfig cfg;
};

// MGF1 binary format; little-endian doubles, atomic temp-file rename.
void save_checkpoint(const TrainState& state, const TrainConfig& cfg,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Training-log line for one step, formatted exactly as logged.
std::string format_log_row(int64_t step, double lr,
                           const objectives::LossReport& report);
inline constexpr const char* kLogHeader =
    "step,lr,l_sample,l_frame,l_phoneme,l_sentence,l_total";

}  // namespace mgf::trainer

#endif  // MGF_TRAINER_HPP_
