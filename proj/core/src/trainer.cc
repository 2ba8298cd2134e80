// core/src/trainer.cc

#include "mgf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "mgf/error.hpp"
#include "mgf/parallel.hpp"
#include "mgf/rng.hpp"

namespace mgf::trainer {

namespace fs = std::filesystem;
namespace ad = mgf::ad;
using nlohmann::json;
using encoder::TargetKind;

void TrainConfig::validate() const {
  model.validate();
  if (base_lr <= 0.0) throw Error("train config: base_lr must be positive");
  if (warmup_steps < 1) throw Error("train config: warmup_steps must be >= 1");
  if (decay_exponent < 0.0)
    throw Error("train config: decay_exponent must be nonnegative");
  if (batch_size < 2) throw Error("train config: batch_size must be >= 2");
  if (epochs < 1) throw Error("train config: epochs must be >= 1");
  if (negatives < 1) throw Error("train config: negatives must be >= 1");
  if (tau_phoneme <= 0.0 || tau_sentence <= 0.0)
    throw Error("train config: temperatures must be positive");
  if (crop_samples < dsp::kFrameHop)
    throw Error("train config: crop_samples must cover at least one frame");
  if (lambda.sample < 0.0 || lambda.frame < 0.0 || lambda.phoneme < 0.0 ||
      lambda.sentence < 0.0)
    throw Error("train config: loss weights must be nonnegative");
  if (frame_weights.lps25 < 0.0 || frame_weights.lps400 < 0.0 ||
      frame_weights.mfcc25 < 0.0 || frame_weights.mfcc400 < 0.0)
    throw Error("train config: frame weights must be nonnegative");
  bool sample_on = !ablation.drop_sample && lambda.sample > 0.0;
  bool frame_on = !ablation.drop_frame && lambda.frame > 0.0;
  bool phoneme_on = !ablation.drop_phoneme && lambda.phoneme > 0.0;
  bool sentence_on = !ablation.drop_sentence && lambda.sentence > 0.0;
  if (!sample_on && !frame_on && !phoneme_on && !sentence_on)
    throw Error("train config: every objective is disabled");
}

std::map<encoder::TargetKind, double> FrameWeights::as_map() const {
  return {{encoder::TargetKind::kLps25, lps25},
          {encoder::TargetKind::kLps400, lps400},
          {encoder::TargetKind::kMfcc25, mfcc25},
          {encoder::TargetKind::kMfcc400, mfcc400}};
}

TrainState init_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState state;
  state.model =
      encoder::init_model(cfg.model, derive_seed(cfg.seed, "model_init"));
  for (const auto& [name, t] : state.model.params) {
    state.m1.emplace(name, Array(t->value.shape()));
    state.m2.emplace(name, Array(t->value.shape()));
  }
  state.run_seed = cfg.seed;
  return state;
}

double lr_schedule(int64_t step, const TrainConfig& cfg) {
  if (step < 1) throw Error("lr_schedule: step must be >= 1");
  double ratio =
      static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  if (step <= cfg.warmup_steps) return cfg.base_lr * ratio;
  return cfg.base_lr * std::pow(ratio, -cfg.decay_exponent);
}

namespace {

struct Prep {
  dsp::Waveform original_a;  // unaugmented crop, the reconstruction target
  dsp::Waveform aug_a;
  dsp::Waveform aug_b;
  dsp::Waveform masked_a;
  objectives::MaskPlan plan;
  std::map<TargetKind, Array> targets;
};

}  // namespace

objectives::LossReport train_step(
    const std::vector<const corpus::Utterance*>& batch, TrainState& state,
    const TrainConfig& cfg, const corpus::NoiseBank& bank) {
  int64_t n = static_cast<int64_t>(batch.size());
  if (n < 2) throw Error("train step needs a batch of >= 2 utterances");
  const AblationFlags& flags = cfg.ablation;
  const bool need_masked =
      !flags.drop_sample || !flags.drop_frame || !flags.drop_phoneme;
  const bool need_clean_a = !flags.drop_phoneme || !flags.drop_sentence;
  const bool need_clean_b = !flags.drop_sentence;
  const int64_t step_index = state.step + 1;
  const uint64_t step_seed =
      derive_seed(derive_seed(state.run_seed, "step"),
                  static_cast<uint64_t>(step_index));
  const int64_t crop_frames = dsp::frame_count_10ms(cfg.crop_samples);

  std::vector<Prep> prep(static_cast<size_t>(n));
  parallel_for(n, [&](int64_t i) {
    Prep& p = prep[static_cast<size_t>(i)];
    uint64_t su = derive_seed(step_seed, static_cast<uint64_t>(i));
    objectives::CropPair crops = objectives::sample_crops(
        *batch[static_cast<size_t>(i)], cfg.crop_samples,
        derive_seed(su, "crop"));
    p.aug_a = objectives::augment(crops.a, bank, derive_seed(su, "aug_a"),
                                  cfg.augment);
    if (need_clean_b)
      p.aug_b = objectives::augment(crops.b, bank, derive_seed(su, "aug_b"),
                                    cfg.augment);
    p.plan = objectives::plan_masks(crop_frames, derive_seed(su, "plan"));
    if (need_masked)
      p.masked_a =
          objectives::apply_masks(p.aug_a, p.plan, bank,
                                  derive_seed(su, "fill"), cfg.zero_fill_masks);
    if (!flags.drop_frame)
      p.targets = objectives::crop_targets(crops.a, cfg.normalize_targets);
    if (!flags.drop_sample) p.original_a = std::move(crops.a);
  });

  encoder::Model& model = state.model;
  encoder::zero_grads(model);

  std::vector<ad::Tensor> rep_masked(static_cast<size_t>(n));
  std::vector<ad::Tensor> rep_clean_a(static_cast<size_t>(n));
  std::vector<ad::Tensor> rep_clean_b(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const Prep& p = prep[static_cast<size_t>(i)];
    if (need_masked)
      rep_masked[i] = encoder::encode(
          encoder::stem_forward(encoder::waveform_input(p.masked_a), model),
          model);
    if (need_clean_a)
      rep_clean_a[i] = encoder::encode(
          encoder::stem_forward(encoder::waveform_input(p.aug_a), model),
          model);
    if (need_clean_b)
      rep_clean_b[i] = encoder::encode(
          encoder::stem_forward(encoder::waveform_input(p.aug_b), model),
          model);
  }

  objectives::LossReport report;
  ad::Tensor l_sample, l_frame, l_phoneme, l_sentence;
  const double inv_n = 1.0 / static_cast<double>(n);

  if (!flags.drop_sample) {
    ad::Tensor acc;
    double alpha_sum = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      objectives::SampleLossTrace trace;
      auto li = objectives::loss_sample(
          encoder::decode_waveform(rep_masked[i], model),
          prep[static_cast<size_t>(i)].original_a, &trace);
      alpha_sum += trace.alpha;
      acc = acc ? ad::add(acc, li) : li;
    }
    l_sample = ad::mul_scalar(acc, inv_n);
    report.alpha = alpha_sum * inv_n;
  }

  if (!flags.drop_frame) {
    ad::Tensor acc;
    std::map<TargetKind, double> term_sums;
    for (int64_t i = 0; i < n; ++i) {
      const Prep& p = prep[static_cast<size_t>(i)];
      std::map<TargetKind, ad::Tensor> preds;
      for (TargetKind kind : encoder::kAllTargetKinds)
        preds[kind] = encoder::head_frame_features(rep_masked[i], kind, model);
      std::map<TargetKind, double> trace;
      auto li = objectives::loss_frame(preds, p.targets,
                                       cfg.frame_weights.as_map(),
                                       p.plan.unmasked, &trace);
      for (const auto& [kind, v] : trace) term_sums[kind] += v;
      acc = acc ? ad::add(acc, li) : li;
    }
    l_frame = ad::mul_scalar(acc, inv_n);
    for (const auto& [kind, v] : term_sums)
      report.frame_terms[kind] = v * inv_n;
  }

  if (!flags.drop_phoneme) {
    ad::Tensor acc;
    int64_t contributing = 0;
    ad::Tensor all_clean;
    if (!flags.generative_phoneme) {
      std::vector<ad::Tensor> parts(rep_clean_a.begin(), rep_clean_a.end());
      all_clean = ad::concat_rows(parts);
    }
    for (int64_t i = 0; i < n; ++i) {
      const Prep& p = prep[static_cast<size_t>(i)];
      if (p.plan.masked.empty()) continue;
      auto anchors = ad::gather_rows(rep_masked[i], p.plan.masked);
      auto positives = ad::gather_rows(rep_clean_a[i], p.plan.masked);
      ad::Tensor li;
      if (flags.generative_phoneme) {
        li = ad::mean_all(ad::abs(ad::sub(anchors, positives)));
      } else {
        uint64_t su = derive_seed(step_seed, static_cast<uint64_t>(i));
        Rng rng(derive_seed(su, "negatives"));
        std::vector<int64_t> idx;
        idx.reserve(p.plan.masked.size() *
                    static_cast<size_t>(cfg.negatives));
        for (size_t a = 0; a < p.plan.masked.size(); ++a)
          for (int64_t k = 0; k < cfg.negatives; ++k) {
            int64_t j = static_cast<int64_t>(
                rng.uniform_int(static_cast<uint64_t>(n - 1)));
            if (j >= i) ++j;  // a different sentence
            int64_t f = static_cast<int64_t>(
                rng.uniform_int(static_cast<uint64_t>(crop_frames)));
            idx.push_back(j * crop_frames + f);
          }
        li = objectives::loss_phoneme(anchors, positives,
                                      ad::gather_rows(all_clean, idx),
                                      cfg.negatives, cfg.tau_phoneme);
      }
      acc = acc ? ad::add(acc, li) : li;
      ++contributing;
    }
    if (contributing > 0)
      l_phoneme = ad::mul_scalar(acc, 1.0 / static_cast<double>(contributing));
  }

  if (!flags.drop_sentence) {
    std::vector<ad::Tensor> zs;
    zs.reserve(static_cast<size_t>(2 * n));
    for (int64_t i = 0; i < n; ++i) {
      zs.push_back(encoder::head_sentence(rep_clean_a[i], model));
      zs.push_back(encoder::head_sentence(rep_clean_b[i], model));
    }
    l_sentence =
        objectives::loss_sentence(ad::concat_rows(zs), cfg.tau_sentence);
  }

  auto total = objectives::total_loss(l_sample, l_frame, l_phoneme, l_sentence,
                                      cfg.lambda, &report);
  ad::backward(total);

  // Global-norm gradient clipping, then bias-corrected Adam.
  double sq_norm = 0.0;
  for (const auto& [name, t] : model.params) {
    if (!t->has_grad) continue;
    for (int64_t j = 0; j < t->grad.numel(); ++j)
      sq_norm += t->grad.at(j) * t->grad.at(j);
  }
  double norm = std::sqrt(sq_norm);
  double clip = norm > kClipNorm ? kClipNorm / norm : 1.0;
  double lr = lr_schedule(step_index, cfg);
  for (auto& [name, t] : model.params)
    adam_update(t->value, t->has_grad ? t->grad : Array(), clip,
                state.m1.at(name), state.m2.at(name), step_index, lr);
  state.step = step_index;
  return report;
}

void adam_update(Array& value, const Array& grad, double grad_scale,
                 Array& m1, Array& m2, int64_t step, double lr) {
  bool has_grad = grad.numel() == value.numel();
  double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
  double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
  for (int64_t j = 0; j < value.numel(); ++j) {
    double g = has_grad ? grad.at(j) * grad_scale : 0.0;
    m1.at(j) = kAdamBeta1 * m1.at(j) + (1.0 - kAdamBeta1) * g;
    m2.at(j) = kAdamBeta2 * m2.at(j) + (1.0 - kAdamBeta2) * g * g;
    value.at(j) -=
        lr * (m1.at(j) / bc1) / (std::sqrt(m2.at(j) / bc2) + kAdamEps);
  }
}

std::string format_log_row(int64_t step, double lr,
                           const objectives::LossReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(step), lr, report.l_sample,
                report.l_frame, report.l_phoneme, report.l_sentence,
                report.l_total);
  return buf;
}

std::string pretrain(const corpus::Corpus& corpus, const TrainConfig& cfg,
                     const std::string& out_dir,
                     const std::string& resume_from) {
  if (corpus.utterances.empty()) throw Error("empty corpus");
  TrainConfig run_cfg = cfg;
  TrainState state;
  bool resumed = !resume_from.empty();
  if (resumed) {
    Checkpoint ck = load_checkpoint(resume_from);
    run_cfg = ck.cfg;
    run_cfg.epochs = cfg.epochs;  // the caller supplies the new horizon
    state = std::move(ck.state);
  } else {
    run_cfg.validate();
    state = init_state(run_cfg);
  }

  fs::create_directories(out_dir);
  const std::string log_path = out_dir + "/train_log.csv";
  const std::string ck_path = out_dir + "/checkpoint_last.mgf";

  int64_t n = static_cast<int64_t>(corpus.utterances.size());
  int64_t full = n / run_cfg.batch_size;
  int64_t rem = n % run_cfg.batch_size;
  int64_t steps_per_epoch = full + (rem >= 2 ? 1 : 0);
  if (steps_per_epoch == 0)
    throw Error("corpus of " + std::to_string(n) +
                " utterances cannot fill a batch of 2");
  int64_t start_epoch = state.step / steps_per_epoch;

  bool append = resumed && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("cannot open training log: " + log_path);
  if (!append) log << kLogHeader << "\n";

  corpus::NoiseBank bank;
  for (int64_t epoch = start_epoch; epoch < run_cfg.epochs; ++epoch) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(derive_seed(state.run_seed, "shuffle"),
                                static_cast<uint64_t>(epoch)));
    for (int64_t i = n - 1; i > 0; --i) {
      int64_t j = static_cast<int64_t>(
          shuffle_rng.uniform_int(static_cast<uint64_t>(i + 1)));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    for (int64_t b = 0; b < steps_per_epoch; ++b) {
      int64_t lo = b * run_cfg.batch_size;
      int64_t hi = std::min(lo + run_cfg.batch_size, n);
      std::vector<const corpus::Utterance*> batch;
      for (int64_t i = lo; i < hi; ++i)
        batch.push_back(
            &corpus.utterances[static_cast<size_t>(order[static_cast<size_t>(i)])]);
      objectives::LossReport report = train_step(batch, state, run_cfg, bank);
      log << format_log_row(state.step, lr_schedule(state.step, run_cfg),
                            report)
          << "\n";
    }
    log.flush();
    save_checkpoint(state, run_cfg, ck_path);
  }
  if (start_epoch >= run_cfg.epochs)
    save_checkpoint(state, run_cfg, ck_path);  // nothing left to train
  return ck_path;
}

// ---- MGF1 checkpoint format ----

namespace {

void to_json_cfg(json& j, const TrainConfig& cfg) {
  j = json{
      {"model",
       {{"stem_kernel", cfg.model.stem_kernel},
        {"stem_stride", cfg.model.stem_stride},
        {"stem_pad", cfg.model.stem_pad},
        {"stem_channels", cfg.model.stem_channels},
        {"d_model", cfg.model.d_model},
        {"heads", cfg.model.heads},
        {"encoder_blocks", cfg.model.encoder_blocks},
        {"decoder_blocks", cfg.model.decoder_blocks}}},
      {"base_lr", cfg.base_lr},
      {"warmup_steps", cfg.warmup_steps},
      {"decay_exponent", cfg.decay_exponent},
      {"batch_size", cfg.batch_size},
      {"epochs", cfg.epochs},
      {"seed", cfg.seed},
      {"lambda",
       {{"sample", cfg.lambda.sample},
        {"frame", cfg.lambda.frame},
        {"phoneme", cfg.lambda.phoneme},
        {"sentence", cfg.lambda.sentence}}},
      {"frame_weights",
       {{"lps25", cfg.frame_weights.lps25},
        {"lps400", cfg.frame_weights.lps400},
        {"mfcc25", cfg.frame_weights.mfcc25},
        {"mfcc400", cfg.frame_weights.mfcc400}}},
      {"tau_phoneme", cfg.tau_phoneme},
      {"tau_sentence", cfg.tau_sentence},
      {"negatives", cfg.negatives},
      {"crop_samples", cfg.crop_samples},
      {"zero_fill_masks", cfg.zero_fill_masks},
      {"normalize_targets", cfg.normalize_targets},
      {"augment",
       {{"mask_ms_lo", cfg.augment.mask_ms_lo},
        {"mask_ms_hi", cfg.augment.mask_ms_hi},
        {"snr_db_lo", cfg.augment.snr_db_lo},
        {"snr_db_hi", cfg.augment.snr_db_hi}}},
      {"ablation",
       {{"drop_sample", cfg.ablation.drop_sample},
        {"drop_frame", cfg.ablation.drop_frame},
        {"drop_phoneme", cfg.ablation.drop_phoneme},
        {"drop_sentence", cfg.ablation.drop_sentence},
        {"generative_phoneme", cfg.ablation.generative_phoneme}}}};
}

TrainConfig cfg_from_json(const json& j) {
  TrainConfig cfg;
  const json& m = j.at("model");
  cfg.model.stem_kernel = m.at("stem_kernel").get<int64_t>();
  cfg.model.stem_stride = m.at("stem_stride").get<int64_t>();
  cfg.model.stem_pad = m.at("stem_pad").get<int64_t>();
  cfg.model.stem_channels = m.at("stem_channels").get<int64_t>();
  cfg.model.d_model = m.at("d_model").get<int64_t>();
  cfg.model.heads = m.at("heads").get<int64_t>();
  cfg.model.encoder_blocks = m.at("encoder_blocks").get<int64_t>();
  cfg.model.decoder_blocks = m.at("decoder_blocks").get<int64_t>();
  cfg.base_lr = j.at("base_lr").get<double>();
  cfg.warmup_steps = j.at("warmup_steps").get<int64_t>();
  cfg.decay_exponent = j.at("decay_exponent").get<double>();
  cfg.batch_size = j.at("batch_size").get<int64_t>();
  cfg.epochs = j.at("epochs").get<int64_t>();
  cfg.seed = j.at("seed").get<uint64_t>();
  const json& l = j.at("lambda");
  cfg.lambda.sample = l.at("sample").get<double>();
  cfg.lambda.frame = l.at("frame").get<double>();
  cfg.lambda.phoneme = l.at("phoneme").get<double>();
  cfg.lambda.sentence = l.at("sentence").get<double>();
  const json& fw = j.at("frame_weights");
  cfg.frame_weights.lps25 = fw.at("lps25").get<double>();
  cfg.frame_weights.lps400 = fw.at("lps400").get<double>();
  cfg.frame_weights.mfcc25 = fw.at("mfcc25").get<double>();
  cfg.frame_weights.mfcc400 = fw.at("mfcc400").get<double>();
  cfg.tau_phoneme = j.at("tau_phoneme").get<double>();
  cfg.tau_sentence = j.at("tau_sentence").get<double>();
  cfg.negatives = j.at("negatives").get<int64_t>();
  cfg.crop_samples = j.at("crop_samples").get<int64_t>();
  cfg.zero_fill_masks = j.at("zero_fill_masks").get<bool>();
  cfg.normalize_targets = j.at("normalize_targets").get<bool>();
  const json& a = j.at("augment");
  cfg.augment.mask_ms_lo = a.at("mask_ms_lo").get<double>();
  cfg.augment.mask_ms_hi = a.at("mask_ms_hi").get<double>();
  cfg.augment.snr_db_lo = a.at("snr_db_lo").get<double>();
  cfg.augment.snr_db_hi = a.at("snr_db_hi").get<double>();
  const json& f = j.at("ablation");
  cfg.ablation.drop_sample = f.at("drop_sample").get<bool>();
  cfg.ablation.drop_frame = f.at("drop_frame").get<bool>();
  cfg.ablation.drop_phoneme = f.at("drop_phoneme").get<bool>();
  cfg.ablation.drop_sentence = f.at("drop_sentence").get<bool>();
  cfg.ablation.generative_phoneme = f.at("generative_phoneme").get<bool>();
  return cfg;
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(out, bits);
}

void put_table(std::string& out, const std::map<std::string, Array>& table) {
  put_u64(out, table.size());
  for (const auto& [name, a] : table) {
    put_u64(out, name.size());
    out.append(name);
    put_u64(out, a.shape().size());
    for (int64_t d : a.shape()) put_u64(out, static_cast<uint64_t>(d));
    for (int64_t i = 0; i < a.numel(); ++i) put_f64(out, a.at(i));
  }
}

struct Reader {
  const std::string& data;
  size_t pos = 0;

  void need(size_t n) {
    if (pos + n > data.size()) throw Error("corrupt checkpoint");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(data[pos++]))
           << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(data[pos++]))
           << (8 * i);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

std::map<std::string, Array> read_table(Reader& r) {
  std::map<std::string, Array> table;
  uint64_t count = r.u64();
  for (uint64_t i = 0; i < count; ++i) {
    uint64_t name_len = r.u64();
    if (name_len > 4096) throw Error("corrupt checkpoint");
    std::string name = r.str(name_len);
    uint64_t ndim = r.u64();
    if (ndim > 8) throw Error("corrupt checkpoint");
    std::vector<int64_t> shape;
    int64_t numel = 1;
    for (uint64_t d = 0; d < ndim; ++d) {
      uint64_t dim = r.u64();
      if (dim > (1ull << 32)) throw Error("corrupt checkpoint");
      shape.push_back(static_cast<int64_t>(dim));
      numel *= static_cast<int64_t>(dim);
    }
    Array a(shape);
    for (int64_t j = 0; j < numel; ++j) a.at(j) = r.f64();
    table.emplace(std::move(name), std::move(a));
  }
  return table;
}

}  // namespace

void save_checkpoint(const TrainState& state, const TrainConfig& cfg,
                     const std::string& path) {
  std::string out;
  out.reserve(1 << 20);
  out.append("MGF1");
  put_u32(out, 1);  // version
  json meta;
  to_json_cfg(meta, cfg);
  json top{{"cfg", meta},
           {"step", state.step},
           {"run_seed", state.run_seed}};
  std::string meta_str = top.dump();
  put_u64(out, meta_str.size());
  out.append(meta_str);
  std::map<std::string, Array> params;
  for (const auto& [name, t] : state.model.params)
    params.emplace(name, t->value);
  put_table(out, params);
  put_table(out, state.m1);
  put_table(out, state.m2);

  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("cannot write checkpoint: " + path);
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  Reader r{data};
  if (data.size() < 4) throw Error("corrupt checkpoint");
  if (r.str(4) != "MGF1") throw Error("not an MGF checkpoint");
  uint32_t version = r.u32();
  if (version != 1)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  uint64_t meta_len = r.u64();
  if (meta_len > data.size()) throw Error("corrupt checkpoint");
  std::string meta_str = r.str(meta_len);
  json top;
  try {
    top = json::parse(meta_str);
  } catch (const json::exception&) {
    throw Error("corrupt checkpoint");
  }
  Checkpoint ck;
  try {
    ck.cfg = cfg_from_json(top.at("cfg"));
    ck.state.step = top.at("step").get<int64_t>();
    ck.state.run_seed = top.at("run_seed").get<uint64_t>();
  } catch (const json::exception&) {
    throw Error("corrupt checkpoint");
  }
  ck.cfg.validate();

  ck.state.model = encoder::init_model(ck.cfg.model, 0);
  std::map<std::string, Array> params = read_table(r);
  std::map<std::string, Array> m1 = read_table(r);
  std::map<std::string, Array> m2 = read_table(r);
  if (r.pos != data.size()) throw Error("corrupt checkpoint");
  if (params.size() != ck.state.model.params.size())
    throw Error("corrupt checkpoint");
  for (auto& [name, t] : ck.state.model.params) {
    auto it = params.find(name);
    if (it == params.end() || !it->second.same_shape(t->value))
      throw Error("corrupt checkpoint");
    t->value = std::move(it->second);
    auto i1 = m1.find(name);
    auto i2 = m2.find(name);
    if (i1 == m1.end() || i2 == m2.end() ||
        !i1->second.same_shape(t->value) || !i2->second.same_shape(t->value))
      throw Error("corrupt checkpoint");
  }
  ck.state.m1 = std::move(m1);
  ck.state.m2 = std::move(m2);
  return ck;
}

}  // namespace mgf::trainer
