// core/src/dsp.cc

#include "mgf/dsp.hpp"

#include <algorithm>
#include <cmath>

#include "mgf/error.hpp"

namespace mgf::dsp {

namespace {

bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

int64_t next_pow2(int64_t n) {
  int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// |DFT|^2 of each (windowed) frame over the first fft_size/2+1 bins.
Array power_spectrum(const FrameGrid& grid, int64_t fft_size) {
  if (!is_pow2(fft_size))
    throw Error("fft size must be a power of two, got " +
                std::to_string(fft_size));
  if (fft_size < grid.frame_len) throw Error("fft too small");
  int64_t n_bins = fft_size / 2 + 1;
  Array out({grid.n_frames(), n_bins});
  std::vector<double> re(static_cast<size_t>(fft_size));
  std::vector<double> im(static_cast<size_t>(fft_size));
  for (int64_t f = 0; f < grid.n_frames(); ++f) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    for (int64_t t = 0; t < grid.frame_len; ++t)
      re[static_cast<size_t>(t)] = grid.frames.at(f, t);
    fft(re, im);
    for (int64_t k = 0; k < n_bins; ++k) {
      size_t i = static_cast<size_t>(k);
      out.at(f, k) = re[i] * re[i] + im[i] * im[i];
    }
  }
  return out;
}

int context_ms(const FrameGrid& grid) {
  return static_cast<int>(
      std::lround(1000.0 * static_cast<double>(grid.frame_len) /
                  static_cast<double>(grid.sample_rate)));
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

}  // namespace

int64_t frame_count_10ms(int64_t samples) {
  if (samples < kFrameHop)
    throw Error("input too short: need at least " + std::to_string(kFrameHop) +
                " samples, got " + std::to_string(samples));
  return (samples - kFrameHop) / kFrameHop + 1;
}

std::vector<double> hann_window(int64_t n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                             static_cast<double>(n));
  return w;
}

FrameGrid frame_signal(const Waveform& wave, int64_t frame_len, int64_t hop) {
  if (frame_len < 1 || hop < 1)
    throw Error("frame_len and hop must be positive");
  if (wave.size() < frame_len) throw Error("input too short");
  int64_t n_frames = (wave.size() - frame_len) / hop + 1;
  return frame_signal_padded(wave, frame_len, hop, n_frames);
}

FrameGrid frame_signal_padded(const Waveform& wave, int64_t frame_len,
                              int64_t hop, int64_t n_frames) {
  if (frame_len < 1 || hop < 1)
    throw Error("frame_len and hop must be positive");
  if (n_frames < 1) throw Error("need at least one frame");
  std::vector<double> window = hann_window(frame_len);
  FrameGrid grid;
  grid.frames = Array({n_frames, frame_len});
  grid.hop = hop;
  grid.frame_len = frame_len;
  grid.sample_rate = wave.sample_rate;
  for (int64_t f = 0; f < n_frames; ++f) {
    int64_t start = f * hop;
    int64_t avail = std::min(frame_len, wave.size() - start);
    for (int64_t t = 0; t < avail; ++t)
      grid.frames.at(f, t) = wave.samples[static_cast<size_t>(start + t)] *
                             window[static_cast<size_t>(t)];
  }
  return grid;
}

void fft(std::vector<double>& re, std::vector<double>& im) {
  size_t n = re.size();
  if (im.size() != n) throw Error("fft: re/im length mismatch");
  if (!is_pow2(static_cast<int64_t>(n)))
    throw Error("fft size must be a power of two, got " + std::to_string(n));
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    size_t half = len / 2;
    for (size_t k = 0; k < half; ++k) {
      // Twiddles from fresh trig calls; the usual recurrence drifts at
      // large transform sizes.
      double ang = -2.0 * M_PI * static_cast<double>(k) /
                   static_cast<double>(len);
      double wr = std::cos(ang), wi = std::sin(ang);
      for (size_t i = k; i < n; i += len) {
        size_t j = i + half;
        double tr = re[j] * wr - im[j] * wi;
        double ti = re[j] * wi + im[j] * wr;
        re[j] = re[i] - tr;
        im[j] = im[i] - ti;
        re[i] += tr;
        im[i] += ti;
      }
    }
  }
}

FeatureMatrix log_power_spectrum(const FrameGrid& grid, int64_t fft_size) {
  Array power = power_spectrum(grid, fft_size);
  for (int64_t i = 0; i < power.numel(); ++i)
    power.at(i) = std::log(power.at(i) + kEpsLog);
  FeatureMatrix out;
  out.values = std::move(power);
  out.kind = FeatureKind::kLps;
  out.context_window_ms = context_ms(grid);
  return out;
}

Array mel_filterbank(int64_t n_mels, int64_t fft_size, int sample_rate) {
  if (n_mels < 2) throw Error("need at least 2 mel filters");
  int64_t n_bins = fft_size / 2 + 1;
  double nyquist = static_cast<double>(sample_rate) / 2.0;
  double mel_max = hz_to_mel(nyquist);
  std::vector<double> edges(static_cast<size_t>(n_mels + 2));
  for (int64_t m = 0; m < n_mels + 2; ++m)
    edges[static_cast<size_t>(m)] =
        mel_to_hz(mel_max * static_cast<double>(m) /
                  static_cast<double>(n_mels + 1));
  Array bank({n_mels, n_bins});
  for (int64_t m = 0; m < n_mels; ++m) {
    double lo = edges[static_cast<size_t>(m)];
    double mid = edges[static_cast<size_t>(m + 1)];
    double hi = edges[static_cast<size_t>(m + 2)];
    for (int64_t k = 0; k < n_bins; ++k) {
      double hz = static_cast<double>(k) * static_cast<double>(sample_rate) /
                  static_cast<double>(fft_size);
      double w = 0.0;
      if (hz > lo && hz < hi)
        w = hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
      bank.at(m, k) = w;
    }
  }
  for (int64_t m = 0; m < n_mels; ++m) {
    double s = 0.0;
    for (int64_t k = 0; k < n_bins; ++k) s += bank.at(m, k);
    if (s <= 0.0)
      throw Error("mel filter " + std::to_string(m) +
                  " has empty support; fft size too small");
  }
  return bank;
}

Array dct2_orthonormal(int64_t n) {
  Array d({n, n});
  double s0 = std::sqrt(1.0 / static_cast<double>(n));
  double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (int64_t k = 0; k < n; ++k)
    for (int64_t i = 0; i < n; ++i)
      d.at(k, i) = (k == 0 ? s0 : sk) *
                   std::cos(M_PI * (static_cast<double>(i) + 0.5) *
                            static_cast<double>(k) / static_cast<double>(n));
  return d;
}

namespace {

FeatureMatrix mfcc_from_power(const Array& power, const FrameGrid& grid,
                              int64_t fft_size, int64_t n_mels,
                              int64_t n_ceps) {
  if (n_ceps > n_mels) throw Error("n_ceps must not exceed n_mels");
  Array bank = mel_filterbank(n_mels, fft_size, grid.sample_rate);
  int64_t n_bins = fft_size / 2 + 1;
  int64_t n_frames = grid.n_frames();
  Array logmel({n_frames, n_mels});
  for (int64_t f = 0; f < n_frames; ++f)
    for (int64_t m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (int64_t k = 0; k < n_bins; ++k) e += bank.at(m, k) * power.at(f, k);
      logmel.at(f, m) = std::log(e + kEpsLog);
    }
  Array dct = dct2_orthonormal(n_mels);
  FeatureMatrix out;
  out.values = Array({n_frames, n_ceps});
  for (int64_t f = 0; f < n_frames; ++f)
    for (int64_t k = 0; k < n_ceps; ++k) {
      double c = 0.0;
      for (int64_t m = 0; m < n_mels; ++m)
        c += dct.at(k, m) * logmel.at(f, m);
      out.values.at(f, k) = c;
    }
  out.kind = FeatureKind::kMfcc;
  out.context_window_ms = context_ms(grid);
  return out;
}

}  // namespace

FeatureMatrix mfcc(const FrameGrid& grid, int64_t n_mels, int64_t n_ceps) {
  int64_t fft_size = next_pow2(grid.frame_len);
  Array power = power_spectrum(grid, fft_size);
  return mfcc_from_power(power, grid, fft_size, n_mels, n_ceps);
}

SpectralPair lps_mfcc_pair(const FrameGrid& grid, int64_t fft_size,
                           int64_t n_mels, int64_t n_ceps) {
  Array power = power_spectrum(grid, fft_size);
  SpectralPair pair;
  pair.mfcc = mfcc_from_power(power, grid, fft_size, n_mels, n_ceps);
  for (int64_t i = 0; i < power.numel(); ++i)
    power.at(i) = std::log(power.at(i) + kEpsLog);
  pair.lps.values = std::move(power);
  pair.lps.kind = FeatureKind::kLps;
  pair.lps.context_window_ms = context_ms(grid);
  return pair;
}

double si_sdr(const Waveform& reference, const Waveform& estimate,
              double* alpha_out) {
  if (reference.size() != estimate.size()) throw Error("length mismatch");
  double ref_energy = 0.0, dot = 0.0;
  for (int64_t i = 0; i < reference.size(); ++i) {
    double r = reference.samples[static_cast<size_t>(i)];
    ref_energy += r * r;
    dot += estimate.samples[static_cast<size_t>(i)] * r;
  }
  if (ref_energy == 0.0) throw Error("degenerate reference");
  double alpha = dot / ref_energy;
  if (alpha_out) *alpha_out = alpha;
  double target_energy = 0.0, distortion = 0.0;
  for (int64_t i = 0; i < reference.size(); ++i) {
    double t = alpha * reference.samples[static_cast<size_t>(i)];
    double d = t - estimate.samples[static_cast<size_t>(i)];
    target_energy += t * t;
    distortion += d * d;
  }
  double db = 10.0 * std::log10(std::max(target_energy, kEpsSdr) /
                                std::max(distortion, kEpsSdr));
  return std::clamp(db, -kSdrClampDb, kSdrClampDb);
}

}  // namespace mgf::dsp
