// core/include/mgf/dsp.hpp
//
// Deterministic signal-processing kernels: framing, windowing, log power
// spectrum, mel filterbank, MFCC, and the SI-SDR metric. All functions are
// pure; identical inputs give bit-identical outputs.

#ifndef MGF_DSP_HPP_
#define MGF_DSP_HPP_

#include <cstdint>
#include <vector>

#include "mgf/array.hpp"

namespace mgf::dsp {

inline constexpr int kDefaultSampleRate = 16000;
inline constexpr int64_t kFrameHop = 160;  // 10 ms at 16 kHz
inline constexpr double kEpsLog = 1e-10;   // spectral floor inside log()
inline constexpr double kEpsSdr = 1e-12;   // distortion floor (see si_sdr)
inline constexpr double kSdrClampDb = 100.0;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
};

struct FrameGrid {
  Array frames;  // [n_frames x frame_len], already windowed
  int64_t hop = 0;
  int64_t frame_len = 0;
  int sample_rate = kDefaultSampleRate;

  int64_t n_frames() const { return frames.rows(); }
};

enum class FeatureKind { kLps, kMfcc };

struct FeatureMatrix {
  Array values;  // [n_frames x n_dims]
  FeatureKind kind = FeatureKind::kLps;
  int context_window_ms = 25;
};

// Frames produced by the 10 ms conv stem grid for a signal of `samples`
// samples: (samples - 160) / 160 + 1. Requires samples >= 160.
int64_t frame_count_10ms(int64_t samples);

// Periodic Hann window of length n.
std::vector<double> hann_window(int64_t n);

// Slices [i*hop, i*hop + frame_len) windows; n_frames = floor((len -
// frame_len)/hop) + 1. Throws "input too short" when len < frame_len.
FrameGrid frame_signal(const Waveform& wave, int64_t frame_len, int64_t hop);

// Like frame_signal but always emits exactly n_frames rows, zero-padding
// frames that run past the end of the signal. Used to align feature targets
// with the 10 ms representation grid when frame_len > hop.
FrameGrid frame_signal_padded(const Waveform& wave, int64_t frame_len,
                              int64_t hop, int64_t n_frames);

// In-place iterative radix-2 FFT; re/im must have equal power-of-two length.
void fft(std::vector<double>& re, std::vector<double>& im);

// log(|DFT|^2 + kEpsLog) over the first fft_size/2 + 1 bins of each frame.
FeatureMatrix log_power_spectrum(const FrameGrid& grid, int64_t fft_size);

// Triangular mel filters, [n_mels x fft_size/2+1], spanning 0 Hz to Nyquist.
Array mel_filterbank(int64_t n_mels, int64_t fft_size, int sample_rate);

// Orthonormal DCT-II basis, [n x n]; row k is the k-th basis vector.
Array dct2_orthonormal(int64_t n);

// First n_ceps orthonormal-DCT-II coefficients of log mel energies.
FeatureMatrix mfcc(const FrameGrid& grid, int64_t n_mels, int64_t n_ceps);

// LPS and MFCC of the same grid from one FFT pass; bit-identical to calling
// log_power_spectrum and mfcc separately with fft_size = next pow2 of
// frame_len.
struct SpectralPair {
  FeatureMatrix lps;
  FeatureMatrix mfcc;
};
SpectralPair lps_mfcc_pair(const FrameGrid& grid, int64_t fft_size,
                           int64_t n_mels, int64_t n_ceps);

// Scale-invariant signal-to-distortion ratio in dB, clamped to +-100.
// alpha = (est . ref) / |ref|^2; value = 10 log10(|alpha ref|^2 /
// |alpha ref - est|^2) with kEpsSdr as a floor on both energies so perfect
// reconstruction clamps at +100 dB instead of dividing by zero.
double si_sdr(const Waveform& reference, const Waveform& estimate,
              double* alpha_out = nullptr);

}  // namespace mgf::dsp

#endif  // MGF_DSP_HPP_
