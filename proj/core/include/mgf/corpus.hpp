// core/include/mgf/corpus.hpp
//
// Data ingestion and generation: PCM16 WAV I/O, JSONL manifest loading, a
// synthetic labeled corpus (formant-triple classes x pitch/tilt speakers),
// and the noise bank used for masking and augmentation.

#ifndef MGF_CORPUS_HPP_
#define MGF_CORPUS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mgf/dsp.hpp"

namespace mgf::corpus {

struct Utterance {
  std::string id;
  dsp::Waveform wave;
  int speaker_id = 0;
  std::vector<int> frame_labels;  // one class id per 10 ms frame; may be empty

  bool has_labels() const { return !frame_labels.empty(); }
};

struct Corpus {
  std::vector<Utterance> utterances;
  int class_count = 0;
  int speaker_count = 0;
};

// Noise source for masking/augmentation. With no clips the bank is
// synthetic: seeded Gaussian noise at RMS 0.1 (-20 dB re full scale).
struct NoiseBank {
  std::vector<dsp::Waveform> clips;
  bool synthetic = true;
};

struct SynthSpec {
  int class_count = 8;
  int speaker_count = 8;
  int utterances_per_speaker = 8;
  double utterance_seconds = 2.0;
  uint64_t seed = 0;
};

// RIFF/WAVE PCM16 mono; samples scaled by 1/32768.
dsp::Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const dsp::Waveform& wave);

// JSONL manifest, one record per line: {id, wav_path, speaker_id,
// labels_path?}; paths resolve relative to the manifest directory. Labels
// are CSV, one class id per line, one line per 10 ms frame.
Corpus load_manifest(const std::string& path);

// Writes dir/manifest.jsonl plus wav/<id>.wav and labels/<id>.csv.
void write_corpus(const Corpus& corpus, const std::string& dir);

// Deterministic synthetic corpus: each utterance concatenates random-length
// (50-300 ms) segments; class c is a sum of three sinusoids at
// class-specific formant frequencies; speaker s applies a fixed pitch shift
// and spectral tilt; frame labels record the majority class per 10 ms tile.
Corpus synth_corpus(const SynthSpec& spec);

// Class formant frequencies in Hz before the speaker pitch shift.
std::vector<double> class_formants(int class_id, int class_count);

// Uniformly chosen clip + offset with cyclic wrap, or seeded Gaussian noise
// when the bank is synthetic. Deterministic under (bank, length, seed).
dsp::Waveform noise_sample(const NoiseBank& bank, int64_t length,
                           uint64_t seed);

}  // namespace mgf::corpus

#endif  // MGF_CORPUS_HPP_
