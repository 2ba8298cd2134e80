// core/include/mgf/probe.hpp
//
// Downstream evaluation: cached clean-pass representation extraction, linear
// probes (per-frame class, speaker id, one-shot speaker id), the label-budget
// sweep comparing pretrained and scratch initializations, and the objective
// ablation table.

#ifndef MGF_PROBE_HPP_
#define MGF_PROBE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mgf/corpus.hpp"
#include "mgf/trainer.hpp"

namespace mgf::probe {

enum class TaskKind { kFrameClass, kSpeaker, kOneShotSpeaker };

struct ProbeTask {
  TaskKind kind = TaskKind::kFrameClass;
  double label_fraction = 1.0;  // applied to the training split
  uint64_t seed = 0;

  void validate() const;  // label_fraction in (0, 1]
};

struct ProbeResult {
  double accuracy = 0.0;
  std::vector<double> per_class;  // NaN for classes absent from the test set
  int64_t train_size = 0;
  int64_t test_size = 0;
  std::string checkpoint_id;
};

// Clean-pass frame representations, index-aligned with corpus.utterances.
struct RepSet {
  std::string checkpoint_id;  // sha256 of the checkpoint file
  std::vector<Array> reps;    // [frames x d_model] each
};

// Forward every utterance through the checkpointed encoder (no masks, no
// augmentation). Results are cached under cache_dir/<checkpoint_id>/<utt>.arr
// and cache hits are returned bit-identically. Utterances carrying labels
// must match the 10 ms frame rate of the representation.
RepSet extract_representations(const std::string& checkpoint_path,
                               const corpus::Corpus& corpus,
                               const std::string& cache_dir);

// Design matrices for one probe task: held-out split plus the label-budget
// subsample of the training half.
struct ProbeData {
  Array train_x, test_x;  // [n x d]
  std::vector<int64_t> train_y, test_y;
  int64_t classes = 0;
};

ProbeData assemble(const RepSet& reps, const corpus::Corpus& corpus,
                   const ProbeTask& task);

// One affine layer + softmax cross-entropy on frozen features: full-batch
// Adam, 100 epochs, inputs standardized by training-set statistics. Throws
// on a degenerate single-class training split.
ProbeResult train_linear_probe(const ProbeData& data);

// extract + assemble + train, with checkpoint_id filled in.
ProbeResult run_probe(const std::string& checkpoint_path,
                      const corpus::Corpus& corpus, const ProbeTask& task,
                      const std::string& cache_dir);

// One training utterance per speaker; ceil(20 %) of each speaker's remaining
// utterances go to test. Speakers with a single utterance are excluded and
// reported in warnings.
struct OneShotSplit {
  std::vector<int64_t> train, test;  // utterance indices
  std::vector<std::string> warnings;
};
OneShotSplit one_shot_split(const corpus::Corpus& corpus, uint64_t seed);

// Label-budget sweep over the frame-class task. For each fraction, both
// initializations are measured two ways: a frozen linear probe and a full
// fine-tune of encoder plus classifier.
struct SweepRow {
  double fraction = 1.0;
  std::string init;  // "pretrained" | "scratch"
  double probe_accuracy = 0.0;
  double finetune_accuracy = 0.0;
  int64_t train_frames = 0;
  int64_t test_frames = 0;
};

struct SweepOptions {
  std::vector<double> fractions;
  uint64_t seed = 0;
  int64_t finetune_epochs = 6;
  int64_t finetune_batch = 8;
  double finetune_lr = 1e-3;
};

inline constexpr const char* kSweepHeader =
    "fraction,init,probe_accuracy,finetune_accuracy,train_frames,test_frames,"
    "dataset";

// Writes out_csv (header above, one row per fraction x init, dataset column
// records provenance) and returns the rows in file order.
std::vector<SweepRow> data_efficiency_sweep(const std::string& checkpoint_path,
                                            const corpus::Corpus& corpus,
                                            const SweepOptions& opt,
                                            const std::string& out_csv,
                                            const std::string& cache_dir);

// Drop-one objective study: pretrains the full model, the four drop-one
// variants and the generative-phoneme variant, probes each on frame-class
// and one-shot speaker, and writes <out_dir>/ablation.csv with deltas
// against the full model. A variant failure marks its row but never removes
// the full-model row.
struct AblationRow {
  std::string variant;
  double frame_class = 0.0;
  double one_shot_speaker = 0.0;
  double frame_class_delta = 0.0;
  double one_shot_delta = 0.0;
  std::string status;  // "ok" | "failed: <reason>"
};

inline constexpr const char* kAblationHeader =
    "variant,frame_class,one_shot_speaker,frame_class_delta,one_shot_delta,"
    "status";

std::vector<AblationRow> ablation_suite(const corpus::Corpus& corpus,
                                        const trainer::TrainConfig& base,
                                        const std::string& out_dir);

}  // namespace mgf::probe

#endif  // MGF_PROBE_HPP_
