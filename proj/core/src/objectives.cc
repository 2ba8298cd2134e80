// core/src/objectives.cc

#include "mgf/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mgf/error.hpp"
#include "mgf/rng.hpp"

namespace mgf::objectives {

namespace {
constexpr int64_t kHop = dsp::kFrameHop;
constexpr int64_t kMaxPlacementFailures = 100;
}  // namespace

MaskPlan plan_masks(int64_t n_frames, uint64_t seed) {
  MaskPlan plan;
  plan.n_frames = n_frames;
  plan.seed = seed;
  if (n_frames < kSegmentFrames) {
    plan.too_short = true;
    for (int64_t f = 0; f < n_frames; ++f) plan.unmasked.push_back(f);
    return plan;
  }
  Rng rng(derive_seed(seed, "mask_plan"));
  // 14 * (k+1) <= 0.20 * n  <=>  70 * (k+1) <= n, exactly in integers.
  while (70 * static_cast<int64_t>(plan.segments.size() + 1) <= n_frames) {
    bool placed = false;
    for (int64_t fails = 0; fails < kMaxPlacementFailures; ++fails) {
      int64_t s = static_cast<int64_t>(
          rng.uniform_int(static_cast<uint64_t>(n_frames - kSegmentFrames + 1)));
      bool overlaps = false;
      for (int64_t t : plan.segments)
        if (s < t + kSegmentFrames && t < s + kSegmentFrames) overlaps = true;
      if (!overlaps) {
        plan.segments.push_back(s);
        placed = true;
        break;
      }
    }
    if (!placed) break;
  }
  std::sort(plan.segments.begin(), plan.segments.end());
  std::vector<bool> is_masked(static_cast<size_t>(n_frames), false);
  for (int64_t s : plan.segments)
    for (int64_t f = s; f < s + kSegmentFrames; ++f)
      is_masked[static_cast<size_t>(f)] = true;
  for (int64_t f = 0; f < n_frames; ++f)
    (is_masked[static_cast<size_t>(f)] ? plan.masked : plan.unmasked)
        .push_back(f);
  return plan;
}

dsp::Waveform apply_masks(const dsp::Waveform& crop, const MaskPlan& plan,
                          const corpus::NoiseBank& bank, uint64_t seed,
                          bool zero_fill) {
  dsp::Waveform out = crop;
  int64_t seg_samples = kSegmentFrames * kHop;
  for (size_t i = 0; i < plan.segments.size(); ++i) {
    int64_t start = plan.segments[i] * kHop;
    if (start + seg_samples > out.size())
      throw Error("mask segment out of range: frames [" +
                  std::to_string(plan.segments[i]) + ", " +
                  std::to_string(plan.segments[i] + kSegmentFrames) +
                  ") exceed crop of " + std::to_string(out.size()) +
                  " samples");
    if (zero_fill) {
      std::fill_n(out.samples.begin() + start, seg_samples, 0.0);
    } else {
      dsp::Waveform noise = corpus::noise_sample(
          bank, seg_samples, derive_seed(derive_seed(seed, "mask_fill"), i));
      std::copy(noise.samples.begin(), noise.samples.end(),
                out.samples.begin() + start);
    }
  }
  return out;
}

CropPair sample_crops(const corpus::Utterance& utt, int64_t crop_samples,
                      uint64_t seed) {
  CropPair pair;
  const auto& wave = utt.wave;
  if (wave.size() < crop_samples) {
    pair.padded = true;
    dsp::Waveform padded;
    padded.sample_rate = wave.sample_rate;
    padded.samples.resize(static_cast<size_t>(crop_samples));
    if (wave.size() == 0) throw Error("empty utterance: " + utt.id);
    for (int64_t i = 0; i < crop_samples; ++i)
      padded.samples[static_cast<size_t>(i)] =
          wave.samples[static_cast<size_t>(i % wave.size())];
    pair.a = padded;
    pair.b = std::move(padded);
    return pair;
  }
  Rng rng(derive_seed(seed, "crops"));
  uint64_t positions =
      static_cast<uint64_t>((wave.size() - crop_samples) / kHop) + 1;
  pair.offset_a = static_cast<int64_t>(rng.uniform_int(positions)) * kHop;
  pair.offset_b = static_cast<int64_t>(rng.uniform_int(positions)) * kHop;
  auto take = [&](int64_t off) {
    dsp::Waveform w;
    w.sample_rate = wave.sample_rate;
    w.samples.assign(wave.samples.begin() + off,
                     wave.samples.begin() + off + crop_samples);
    return w;
  };
  pair.a = take(pair.offset_a);
  pair.b = take(pair.offset_b);
  return pair;
}

dsp::Waveform augment(const dsp::Waveform& crop, const corpus::NoiseBank& bank,
                      uint64_t seed, const AugmentOptions& opt) {
  dsp::Waveform out = crop;
  int64_t len = out.size();
  Rng rng(derive_seed(seed, "augment"));
  double mask_ms = rng.uniform(opt.mask_ms_lo, opt.mask_ms_hi);
  int64_t mask_len =
      std::llround(mask_ms * out.sample_rate / 1000.0);
  mask_len = std::min(mask_len, len);
  if (mask_len > 0) {
    int64_t start = static_cast<int64_t>(
        rng.uniform_int(static_cast<uint64_t>(len - mask_len + 1)));
    std::fill_n(out.samples.begin() + start, mask_len, 0.0);
  }
  double snr_db = rng.uniform(opt.snr_db_lo, opt.snr_db_hi);
  if (std::isfinite(snr_db)) {
    double p_sig = 0.0;
    for (double s : out.samples) p_sig += s * s;
    if (p_sig > 0.0) {
      dsp::Waveform noise =
          corpus::noise_sample(bank, len, derive_seed(seed, "augment_noise"));
      double p_noise = 0.0;
      for (double s : noise.samples) p_noise += s * s;
      if (p_noise > 0.0) {
        double gain =
            std::sqrt(p_sig / (p_noise * std::pow(10.0, snr_db / 10.0)));
        for (int64_t i = 0; i < len; ++i)
          out.samples[static_cast<size_t>(i)] +=
              gain * noise.samples[static_cast<size_t>(i)];
      }
    }
  }
  return out;
}

const Array& FeatureSet::of(encoder::TargetKind kind) const {
  auto it = features.find(kind);
  if (it == features.end())
    throw Error(std::string("feature set missing kind ") +
                encoder::target_kind_name(kind));
  return it->second;
}

FeatureSet compute_features(const dsp::Waveform& wave) {
  FeatureSet set;
  int64_t n = dsp::frame_count_10ms(wave.size());
  for (encoder::TargetKind kind : encoder::kAllTargetKinds) {
    encoder::TargetAnalysis spec = encoder::target_analysis(kind);
    dsp::FrameGrid grid =
        dsp::frame_signal_padded(wave, spec.frame_len, kHop, n);
    dsp::FeatureMatrix fm = spec.mfcc
                                ? dsp::mfcc(grid, spec.n_mels, spec.n_ceps)
                                : dsp::log_power_spectrum(grid, spec.fft_size);
    set.features.emplace(kind, std::move(fm.values));
  }
  return set;
}

namespace {

// Standardize each column over the rows it has (mean 0, variance ~1).
void normalize_columns(Array& a) {
  int64_t rows = a.rows(), cols = a.cols();
  for (int64_t c = 0; c < cols; ++c) {
    double mean = 0.0;
    for (int64_t r = 0; r < rows; ++r) mean += a.at(r, c);
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
      double d = a.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(rows);
    double inv = 1.0 / std::sqrt(var + 1e-8);
    for (int64_t r = 0; r < rows; ++r) a.at(r, c) = (a.at(r, c) - mean) * inv;
  }
}

}  // namespace

Array feature_slice(const FeatureSet& set, encoder::TargetKind kind,
                    int64_t start_frame, int64_t n_frames, bool normalize) {
  const Array& full = set.of(kind);
  if (start_frame < 0 || n_frames < 1 ||
      start_frame + n_frames > full.rows())
    throw Error("feature slice out of range: rows [" +
                std::to_string(start_frame) + ", " +
                std::to_string(start_frame + n_frames) + ") of " +
                std::to_string(full.rows()));
  int64_t dim = full.cols();
  Array out({n_frames, dim});
  for (int64_t r = 0; r < n_frames; ++r)
    for (int64_t c = 0; c < dim; ++c)
      out.at(r, c) = full.at(start_frame + r, c);
  if (normalize) normalize_columns(out);
  return out;
}

std::map<encoder::TargetKind, Array> crop_targets(const dsp::Waveform& crop,
                                                  bool normalize) {
  std::map<encoder::TargetKind, Array> out;
  int64_t n = dsp::frame_count_10ms(crop.size());
  struct Window {
    encoder::TargetKind lps_kind;
    encoder::TargetKind mfcc_kind;
  };
  const Window windows[] = {
      {encoder::TargetKind::kLps25, encoder::TargetKind::kMfcc25},
      {encoder::TargetKind::kLps400, encoder::TargetKind::kMfcc400},
  };
  for (const Window& w : windows) {
    encoder::TargetAnalysis spec = encoder::target_analysis(w.lps_kind);
    dsp::FrameGrid grid =
        dsp::frame_signal_padded(crop, spec.frame_len, kHop, n);
    dsp::SpectralPair pair =
        dsp::lps_mfcc_pair(grid, spec.fft_size, spec.n_mels, spec.n_ceps);
    out.emplace(w.lps_kind, std::move(pair.lps.values));
    out.emplace(w.mfcc_kind, std::move(pair.mfcc.values));
  }
  if (normalize)
    for (auto& [kind, a] : out) normalize_columns(a);
  return out;
}

ad::Tensor loss_sample(const ad::Tensor& recon, const dsp::Waveform& target,
                       SampleLossTrace* trace) {
  int64_t n = target.size();
  if (recon->value.numel() != n)
    throw Error("reconstruction length " +
                std::to_string(recon->value.numel()) +
                " does not match target length " + std::to_string(n));
  Array tgt({n, 1});
  double energy = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    tgt.at(i) = target.samples[static_cast<size_t>(i)];
    energy += tgt.at(i) * tgt.at(i);
  }
  if (energy <= 0.0) throw Error("degenerate reference");
  auto flat = recon->value.cols() == 1 ? recon
                                       : ad::reshape(recon, {n, 1});
  auto xc = ad::constant(tgt);
  auto alpha = ad::mul_scalar(ad::sum_all(ad::mul(flat, xc)), 1.0 / energy);
  auto err = ad::sub(ad::scale(alpha, xc), flat);
  auto num = ad::mul_scalar(ad::mul(alpha, alpha), energy);
  auto den = ad::sum_all(ad::mul(err, err));
  double huge = std::numeric_limits<double>::max();
  auto ratio = ad::mul(ad::clamp(num, dsp::kEpsSdr, huge),
                       ad::powc(ad::clamp(den, dsp::kEpsSdr, huge), -1.0));
  auto sdr = ad::clamp(ad::mul_scalar(ad::log(ratio), 10.0 / std::log(10.0)),
                       -dsp::kSdrClampDb, dsp::kSdrClampDb);
  if (trace) {
    trace->alpha = alpha->value.at(0);
    trace->sdr_db = sdr->value.at(0);
  }
  return ad::mul_scalar(sdr, -1.0);
}

ad::Tensor loss_frame(
    const std::map<encoder::TargetKind, ad::Tensor>& predictions,
    const std::map<encoder::TargetKind, Array>& targets,
    const std::map<encoder::TargetKind, double>& weights,
    const std::vector<int64_t>& unmasked,
    std::map<encoder::TargetKind, double>* per_kind_trace) {
  if (predictions.empty()) throw Error("frame loss needs at least one kind");
  if (unmasked.empty()) throw Error("no unmasked frames");
  double inv_count = 1.0 / static_cast<double>(unmasked.size());
  ad::Tensor total;
  for (const auto& [kind, pred] : predictions) {
    auto tgt = targets.find(kind);
    if (tgt == targets.end())
      throw Error(std::string("frame loss missing target for kind ") +
                  encoder::target_kind_name(kind));
    auto wit = weights.find(kind);
    double weight = wit == weights.end() ? 1.0 : wit->second;
    if (weight < 0.0) throw Error("frame loss weight must be nonnegative");
    auto term = ad::mul_scalar(
        ad::masked_sq_error(pred, tgt->second, unmasked), weight * inv_count);
    if (per_kind_trace) (*per_kind_trace)[kind] = term->value.at(0);
    total = total ? ad::add(total, term) : term;
  }
  return total;
}

ad::Tensor loss_phoneme(const ad::Tensor& anchors, const ad::Tensor& positives,
                        const ad::Tensor& negatives, int64_t k, double tau) {
  if (k < 1) throw Error("phoneme loss needs at least one negative");
  if (tau <= 0.0) throw Error("temperature must be positive");
  int64_t m = anchors->value.rows();
  int64_t d = anchors->value.cols();
  if (m < 1) throw Error("phoneme loss needs at least one anchor");
  if (positives->value.rows() != m || positives->value.cols() != d)
    throw Error("phoneme positives shape " + shape_str(positives->value.shape()) +
                " does not match anchors " + shape_str(anchors->value.shape()));
  if (negatives->value.rows() != m * k || negatives->value.cols() != d)
    throw Error("phoneme negatives shape " + shape_str(negatives->value.shape()) +
                " does not match " + std::to_string(m * k) + " x " +
                std::to_string(d));
  auto pos = ad::sum_rows(ad::mul(anchors, positives));  // [m]
  auto neg = ad::reshape(
      ad::sum_rows(ad::mul(ad::repeat_rows(anchors, k), negatives)), {m, k});
  auto logits = ad::mul_scalar(
      ad::concat_cols({ad::reshape(pos, {m, 1}), neg}), 1.0 / tau);
  auto lse = ad::logsumexp_rows(logits);  // [m]
  return ad::mean_all(ad::sub(lse, ad::mul_scalar(pos, 1.0 / tau)));
}

ad::Tensor loss_sentence(const ad::Tensor& z, double tau) {
  int64_t rows = z->value.rows();
  if (rows < 4 || rows % 2 != 0) throw Error("need ≥2 sentences");
  if (tau <= 0.0) throw Error("temperature must be positive");
  auto sims = ad::mul_scalar(ad::matmul(z, ad::transpose(z)), 1.0 / tau);
  Array diag({rows, rows});
  for (int64_t i = 0; i < rows; ++i) diag.at(i, i) = -1e30;
  auto masked = ad::add(sims, ad::constant(diag));
  std::vector<int64_t> positive(static_cast<size_t>(rows));
  for (int64_t i = 0; i < rows; ++i)
    positive[static_cast<size_t>(i)] = i ^ 1;
  auto lse = ad::logsumexp_rows(masked);
  return ad::mean_all(ad::sub(lse, ad::take_per_row(masked, positive)));
}

ad::Tensor total_loss(const ad::Tensor& sample, const ad::Tensor& frame,
                      const ad::Tensor& phoneme, const ad::Tensor& sentence,
                      const LossWeights& lambda, LossReport* report) {
  struct Part {
    const char* name;
    const ad::Tensor& tensor;
    double weight;
    double* slot;
  };
  LossReport local;
  LossReport& rep = report ? *report : local;
  rep.lambda = lambda;
  Part parts[] = {
      {"l_sample", sample, lambda.sample, &rep.l_sample},
      {"l_frame", frame, lambda.frame, &rep.l_frame},
      {"l_phoneme", phoneme, lambda.phoneme, &rep.l_phoneme},
      {"l_sentence", sentence, lambda.sentence, &rep.l_sentence},
  };
  ad::Tensor total;
  for (const Part& part : parts) {
    if (!part.tensor) {
      *part.slot = 0.0;
      continue;
    }
    double v = part.tensor->value.at(0);
    if (!std::isfinite(v))
      throw Error(std::string("non-finite loss component ") + part.name);
    *part.slot = v;
    auto weighted = ad::mul_scalar(part.tensor, part.weight);
    total = total ? ad::add(total, weighted) : weighted;
  }
  if (!total) throw Error("no loss components");
  rep.l_total = total->value.at(0);
  return total;
}

}  // namespace mgf::objectives
