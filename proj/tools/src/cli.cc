// tools/src/cli.cc

#include "mgf_cli/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mgf/autodiff.hpp"
#include "mgf/corpus.hpp"
#include "mgf/encoder.hpp"
#include "mgf/error.hpp"
#include "mgf/io_util.hpp"
#include "mgf/objectives.hpp"
#include "mgf/probe.hpp"
#include "mgf/rng.hpp"
#include "mgf/trainer.hpp"
#include "mgf_cli/svg.hpp"

namespace mgf::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string fmt(const char* f, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

corpus::Corpus load_corpus(const std::string& dir_or_manifest) {
  std::string path = dir_or_manifest;
  if (path.size() < 6 || path.substr(path.size() - 6) != ".jsonl")
    path = (fs::path(path) / "manifest.jsonl").string();
  return corpus::load_manifest(path);
}

// ---- configuration: preset < config file < flags ----

trainer::TrainConfig preset_config(const std::string& name) {
  trainer::TrainConfig cfg;  // the defaults are the desk preset
  if (name == "desk") return cfg;
  if (name == "paper") {
    cfg.model.stem_channels = 512;
    cfg.model.d_model = 768;
    cfg.model.heads = 12;
    cfg.model.encoder_blocks = 6;
    cfg.model.decoder_blocks = 4;
    cfg.warmup_steps = 10000;
    cfg.batch_size = 120;
    cfg.base_lr = 1e-3;
    return cfg;
  }
  throw Error("unknown preset: " + name + " (expected desk or paper)");
}

void require_keys(const json& obj, const std::vector<std::string>& allowed,
                  const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw Error("unknown config key: " + path + it.key());
}

// Partial overlay of a RunConfig JSON document onto cfg. The "preset" key is
// handled by the caller; mask constants are accepted but pinned.
void overlay_config(trainer::TrainConfig& cfg, const json& j) {
  require_keys(j, {"preset",        "model",
                   "base_lr",       "warmup_steps",
                   "decay_exponent", "batch_size",
                   "epochs",        "seed",
                   "lambda",        "frame_weights",
                   "tau_phoneme",   "tau_sentence",
                   "negatives",     "crop_samples",
                   "zero_fill_masks", "normalize_targets",
                   "augment",       "ablation",
                   "mask"},
               "");
  if (j.contains("model")) {
    const json& m = j.at("model");
    require_keys(m,
                 {"stem_kernel", "stem_stride", "stem_pad", "stem_channels",
                  "d_model", "heads", "encoder_blocks", "decoder_blocks"},
                 "model.");
    if (m.contains("stem_kernel"))
      cfg.model.stem_kernel = m.at("stem_kernel").get<int64_t>();
    if (m.contains("stem_stride"))
      cfg.model.stem_stride = m.at("stem_stride").get<int64_t>();
    if (m.contains("stem_pad"))
      cfg.model.stem_pad = m.at("stem_pad").get<int64_t>();
    if (m.contains("stem_channels"))
      cfg.model.stem_channels = m.at("stem_channels").get<int64_t>();
    if (m.contains("d_model")) cfg.model.d_model = m.at("d_model").get<int64_t>();
    if (m.contains("heads")) cfg.model.heads = m.at("heads").get<int64_t>();
    if (m.contains("encoder_blocks"))
      cfg.model.encoder_blocks = m.at("encoder_blocks").get<int64_t>();
    if (m.contains("decoder_blocks"))
      cfg.model.decoder_blocks = m.at("decoder_blocks").get<int64_t>();
  }
  if (j.contains("base_lr")) cfg.base_lr = j.at("base_lr").get<double>();
  if (j.contains("warmup_steps"))
    cfg.warmup_steps = j.at("warmup_steps").get<int64_t>();
  if (j.contains("decay_exponent"))
    cfg.decay_exponent = j.at("decay_exponent").get<double>();
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int64_t>();
  if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<int64_t>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  if (j.contains("lambda")) {
    const json& l = j.at("lambda");
    require_keys(l, {"sample", "frame", "phoneme", "sentence"}, "lambda.");
    if (l.contains("sample")) cfg.lambda.sample = l.at("sample").get<double>();
    if (l.contains("frame")) cfg.lambda.frame = l.at("frame").get<double>();
    if (l.contains("phoneme"))
      cfg.lambda.phoneme = l.at("phoneme").get<double>();
    if (l.contains("sentence"))
      cfg.lambda.sentence = l.at("sentence").get<double>();
  }
  if (j.contains("frame_weights")) {
    const json& w = j.at("frame_weights");
    require_keys(w, {"lps25", "lps400", "mfcc25", "mfcc400"},
                 "frame_weights.");
    if (w.contains("lps25"))
      cfg.frame_weights.lps25 = w.at("lps25").get<double>();
    if (w.contains("lps400"))
      cfg.frame_weights.lps400 = w.at("lps400").get<double>();
    if (w.contains("mfcc25"))
      cfg.frame_weights.mfcc25 = w.at("mfcc25").get<double>();
    if (w.contains("mfcc400"))
      cfg.frame_weights.mfcc400 = w.at("mfcc400").get<double>();
  }
  if (j.contains("tau_phoneme"))
    cfg.tau_phoneme = j.at("tau_phoneme").get<double>();
  if (j.contains("tau_sentence"))
    cfg.tau_sentence = j.at("tau_sentence").get<double>();
  if (j.contains("negatives")) cfg.negatives = j.at("negatives").get<int64_t>();
  if (j.contains("crop_samples"))
    cfg.crop_samples = j.at("crop_samples").get<int64_t>();
  if (j.contains("zero_fill_masks"))
    cfg.zero_fill_masks = j.at("zero_fill_masks").get<bool>();
  if (j.contains("normalize_targets"))
    cfg.normalize_targets = j.at("normalize_targets").get<bool>();
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    require_keys(a, {"mask_ms_lo", "mask_ms_hi", "snr_db_lo", "snr_db_hi"},
                 "augment.");
    if (a.contains("mask_ms_lo"))
      cfg.augment.mask_ms_lo = a.at("mask_ms_lo").get<double>();
    if (a.contains("mask_ms_hi"))
      cfg.augment.mask_ms_hi = a.at("mask_ms_hi").get<double>();
    if (a.contains("snr_db_lo"))
      cfg.augment.snr_db_lo = a.at("snr_db_lo").get<double>();
    if (a.contains("snr_db_hi"))
      cfg.augment.snr_db_hi = a.at("snr_db_hi").get<double>();
  }
  if (j.contains("ablation")) {
    const json& f = j.at("ablation");
    require_keys(f,
                 {"drop_sample", "drop_frame", "drop_phoneme", "drop_sentence",
                  "generative_phoneme"},
                 "ablation.");
    if (f.contains("drop_sample"))
      cfg.ablation.drop_sample = f.at("drop_sample").get<bool>();
    if (f.contains("drop_frame"))
      cfg.ablation.drop_frame = f.at("drop_frame").get<bool>();
    if (f.contains("drop_phoneme"))
      cfg.ablation.drop_phoneme = f.at("drop_phoneme").get<bool>();
    if (f.contains("drop_sentence"))
      cfg.ablation.drop_sentence = f.at("drop_sentence").get<bool>();
    if (f.contains("generative_phoneme"))
      cfg.ablation.generative_phoneme =
          f.at("generative_phoneme").get<bool>();
  }
  if (j.contains("mask")) {
    const json& m = j.at("mask");
    require_keys(m, {"segment_frames", "budget"}, "mask.");
    if (m.contains("segment_frames") &&
        m.at("segment_frames").get<int64_t>() != objectives::kSegmentFrames)
      throw Error("mask.segment_frames is pinned to " +
                  std::to_string(objectives::kSegmentFrames));
    if (m.contains("budget") &&
        m.at("budget").get<double>() != objectives::kMaskBudget)
      throw Error("mask.budget is pinned to 0.2");
  }
}

// CLI11 bindings for everything that assembles a TrainConfig.
struct TrainFlags {
  std::string preset = "desk";
  std::string config_file;
  uint64_t seed = 0;
  int64_t epochs = 0, batch = 0, warmup = 0, negatives = 0, crop = 0;
  int64_t d_model = 0, heads = 0, stem_channels = 0, enc_blocks = 0,
          dec_blocks = 0;
  double lr = 0.0, decay = 0.0, tau_phoneme = 0.0, tau_sentence = 0.0;
  double l_sample = 0.0, l_frame = 0.0, l_phoneme = 0.0, l_sentence = 0.0;
  bool zero_fill = false, no_normalize = false;
  bool drop_sample = false, drop_frame = false, drop_phoneme = false,
       drop_sentence = false, generative = false;
  CLI::App* cmd = nullptr;

  void bind(CLI::App* app) {
    cmd = app;
    app->add_option("--preset", preset,
                    "Base configuration: desk (default) or paper");
    app->add_option("--config", config_file,
                    "JSON config file overlaid on the preset");
    app->add_option("--seed", seed, "Run seed");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--batch", batch, "Utterances per step");
    app->add_option("--lr", lr, "Peak learning rate");
    app->add_option("--warmup", warmup, "Warmup steps");
    app->add_option("--decay", decay, "Post-warmup decay exponent");
    app->add_option("--negatives", negatives,
                    "Contrastive negatives per anchor");
    app->add_option("--tau-phoneme", tau_phoneme,
                    "Phoneme InfoNCE temperature");
    app->add_option("--tau-sentence", tau_sentence,
                    "Sentence NT-Xent temperature");
    app->add_option("--crop-samples", crop, "Crop length in samples");
    app->add_option("--lambda-sample", l_sample, "Sample loss weight");
    app->add_option("--lambda-frame", l_frame, "Frame loss weight");
    app->add_option("--lambda-phoneme", l_phoneme, "Phoneme loss weight");
    app->add_option("--lambda-sentence", l_sentence, "Sentence loss weight");
    app->add_option("--d-model", d_model, "Transformer width");
    app->add_option("--heads", heads, "Attention heads");
    app->add_option("--stem-channels", stem_channels, "Conv stem channels");
    app->add_option("--encoder-blocks", enc_blocks, "Encoder depth");
    app->add_option("--decoder-blocks", dec_blocks, "Decoder depth");
    app->add_flag("--zero-fill-masks", zero_fill,
                  "Fill masked spans with zeros instead of noise");
    app->add_flag("--no-normalize-targets", no_normalize,
                  "Regress raw feature targets");
    app->add_flag("--drop-sample", drop_sample, "Disable the sample loss");
    app->add_flag("--drop-frame", drop_frame, "Disable the frame loss");
    app->add_flag("--drop-phoneme", drop_phoneme,
                  "Disable the phoneme loss");
    app->add_flag("--drop-sentence", drop_sentence,
                  "Disable the sentence loss");
    app->add_flag("--generative-phoneme", generative,
                  "L1 phoneme objective instead of InfoNCE");
  }

  trainer::TrainConfig build() const {
    std::string base = preset;
    json file;
    if (!config_file.empty()) {
      try {
        file = json::parse(io::read_file(config_file));
      } catch (const json::exception& e) {
        throw Error("config file " + config_file + ": " + e.what());
      }
      if (!file.is_object())
        throw Error("config file " + config_file + ": expected an object");
      if (file.contains("preset") && !cmd->count("--preset"))
        base = file.at("preset").get<std::string>();
    }
    trainer::TrainConfig cfg = preset_config(base);
    if (!file.is_null()) {
      try {
        overlay_config(cfg, file);
      } catch (const json::exception& e) {
        throw Error("config file " + config_file + ": " + e.what());
      }
    }
    auto on = [&](const char* name) { return cmd->count(name) > 0; };
    if (on("--seed")) cfg.seed = seed;
    if (on("--epochs")) cfg.epochs = epochs;
    if (on("--batch")) cfg.batch_size = batch;
    if (on("--lr")) cfg.base_lr = lr;
    if (on("--warmup")) cfg.warmup_steps = warmup;
    if (on("--decay")) cfg.decay_exponent = decay;
    if (on("--negatives")) cfg.negatives = negatives;
    if (on("--tau-phoneme")) cfg.tau_phoneme = tau_phoneme;
    if (on("--tau-sentence")) cfg.tau_sentence = tau_sentence;
    if (on("--crop-samples")) cfg.crop_samples = crop;
    if (on("--lambda-sample")) cfg.lambda.sample = l_sample;
    if (on("--lambda-frame")) cfg.lambda.frame = l_frame;
    if (on("--lambda-phoneme")) cfg.lambda.phoneme = l_phoneme;
    if (on("--lambda-sentence")) cfg.lambda.sentence = l_sentence;
    if (on("--d-model")) cfg.model.d_model = d_model;
    if (on("--heads")) cfg.model.heads = heads;
    if (on("--stem-channels")) cfg.model.stem_channels = stem_channels;
    if (on("--encoder-blocks")) cfg.model.encoder_blocks = enc_blocks;
    if (on("--decoder-blocks")) cfg.model.decoder_blocks = dec_blocks;
    if (zero_fill) cfg.zero_fill_masks = true;
    if (no_normalize) cfg.normalize_targets = false;
    if (drop_sample) cfg.ablation.drop_sample = true;
    if (drop_frame) cfg.ablation.drop_frame = true;
    if (drop_phoneme) cfg.ablation.drop_phoneme = true;
    if (drop_sentence) cfg.ablation.drop_sentence = true;
    if (generative) cfg.ablation.generative_phoneme = true;
    cfg.validate();
    return cfg;
  }
};

std::string probe_task_name(probe::TaskKind kind) {
  switch (kind) {
    case probe::TaskKind::kFrameClass: return "frame_class";
    case probe::TaskKind::kSpeaker: return "speaker";
    default: return "one_shot_speaker";
  }
}

}  // namespace

GradcheckReport run_gradcheck(uint64_t seed) {
  encoder::EncoderConfig tiny;
  tiny.stem_channels = 8;
  tiny.d_model = 16;
  tiny.heads = 2;
  tiny.encoder_blocks = 1;
  tiny.decoder_blocks = 1;
  encoder::Model model = encoder::init_model(tiny, derive_seed(seed, "model"));

  Rng rng(derive_seed(seed, "gradcheck_waves"));
  std::vector<dsp::Waveform> waves(4);
  for (auto& w : waves) {
    w.samples.resize(1600);
    for (double& s : w.samples) s = rng.uniform(-0.5, 0.5);
  }
  auto targets = objectives::crop_targets(waves[0], true);
  // Distinct weights exercise the weighting path; the wideband spectrum
  // heads are scaled down so the total stays O(100) and the perturbed
  // evaluations of small-gradient coordinates survive the final summation.
  const std::map<encoder::TargetKind, double> weights = {
      {encoder::TargetKind::kLps25, 0.02},
      {encoder::TargetKind::kLps400, 0.01},
      {encoder::TargetKind::kMfcc25, 2.0},
      {encoder::TargetKind::kMfcc400, 1.0}};
  const std::vector<int64_t> unmasked = {0, 2, 4, 6, 8};
  const std::vector<int64_t> anchors_at = {1, 3, 5};
  const std::vector<int64_t> negative_rows = {2, 6, 0, 8, 4, 9};

  auto build = [&]() {
    std::vector<ad::Tensor> reps;
    for (const auto& w : waves)
      reps.push_back(encoder::encode(
          encoder::stem_forward(encoder::waveform_input(w), model), model));
    auto l_sample =
        objectives::loss_sample(encoder::decode_waveform(reps[0], model),
                                waves[0]);
    std::map<encoder::TargetKind, ad::Tensor> preds;
    for (auto kind : encoder::kAllTargetKinds)
      preds.emplace(kind, encoder::head_frame_features(reps[0], kind, model));
    auto l_frame = objectives::loss_frame(preds, targets, weights, unmasked);
    auto l_phoneme = objectives::loss_phoneme(
        ad::gather_rows(reps[0], anchors_at),
        ad::gather_rows(reps[1], anchors_at),
        ad::gather_rows(reps[1], negative_rows), 2, 0.1);
    std::vector<ad::Tensor> zs;
    for (const auto& rep : reps)
      zs.push_back(encoder::head_sentence(rep, model));
    auto l_sentence = objectives::loss_sentence(ad::concat_rows(zs), 0.1);
    return objectives::total_loss(l_sample, l_frame, l_phoneme, l_sentence,
                                  {});
  };

  std::vector<std::string> names;
  std::vector<ad::Tensor> leaves;
  for (auto& [name, t] : model.params) {
    names.push_back(name);
    leaves.push_back(t);
  }

  encoder::zero_grads(model);
  auto loss = build();
  ad::backward(loss);
  std::vector<Array> values, analytic;
  for (auto& t : leaves) {
    values.push_back(t->value);
    analytic.push_back(t->has_grad ? t->grad : Array(t->value.shape()));
  }

  auto f = [&](const std::vector<Array>& ps) {
    for (size_t i = 0; i < leaves.size(); ++i) leaves[i]->value = ps[i];
    double v = build()->value.at(0);
    for (size_t i = 0; i < leaves.size(); ++i) leaves[i]->value = values[i];
    return v;
  };

  // Central differences through the relu kinks need a step matched to the
  // local landscape: too small drowns in summation roundoff, too large may
  // straddle a kink. A correct gradient passes at some step in the sweep; a
  // wrong one fails at every step.
  GradcheckReport report;
  report.params = static_cast<int64_t>(leaves.size());
  report.max_rel_err = std::numeric_limits<double>::infinity();
  for (double eps : {1e-6, 1e-5, 1e-4}) {
    ad::FdOptions opt;
    opt.eps = eps;
    opt.max_coords_per_param = 4;
    opt.seed = derive_seed(seed, "gradcheck_fd");
    ad::FdReport fd = ad::finite_diff_check(f, values, analytic, opt);
    if (fd.max_rel_err < report.max_rel_err) {
      report.max_rel_err = fd.max_rel_err;
      report.checked = fd.checked;
    }
  }
  return report;
}

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{
      "mgf: multi-granularity self-supervised speech representation "
      "learning.\nWorker threads are capped by the MGF_THREADS environment "
      "variable."};
  app.name("mgf");
  app.require_subcommand(1);
  std::function<int()> action;

  // ---- synth ----
  auto* synth = app.add_subcommand(
      "synth", "Generate the synthetic labeled corpus (WAVs + manifest)");
  struct {
    int64_t classes = 8, speakers = 8, utt = 8;
    double seconds = 2.0;
    uint64_t seed = 0;
    std::string out_dir;
  } sy;
  synth->add_option("--classes", sy.classes, "Number of frame classes");
  synth->add_option("--speakers", sy.speakers, "Number of speakers");
  synth->add_option("--utt,--utterances", sy.utt, "Utterances per speaker");
  synth->add_option("--seconds", sy.seconds, "Utterance length in seconds");
  synth->add_option("--seed", sy.seed, "Corpus seed");
  synth->add_option("--out", sy.out_dir, "Output directory")->required();
  synth->callback([&] {
    if (sy.classes < 1 || sy.speakers < 1 || sy.utt < 1 || sy.seconds <= 0)
      throw Error("synth: counts must be positive");
    action = [&]() {
      corpus::SynthSpec spec;
      spec.class_count = static_cast<int>(sy.classes);
      spec.speaker_count = static_cast<int>(sy.speakers);
      spec.utterances_per_speaker = static_cast<int>(sy.utt);
      spec.utterance_seconds = sy.seconds;
      spec.seed = sy.seed;
      corpus::Corpus c = corpus::synth_corpus(spec);
      corpus::write_corpus(c, sy.out_dir);
      out << "wrote " << c.utterances.size() << " utterances ("
          << spec.class_count << " classes, " << spec.speaker_count
          << " speakers) to " << sy.out_dir << "\n";
      return 0;
    };
  });

  // ---- pretrain ----
  auto* pretrain = app.add_subcommand(
      "pretrain", "Pretrain the encoder with the four-scale objective");
  TrainFlags ptf;
  struct {
    std::string corpus_dir, out_dir, resume;
  } pt;
  pretrain->add_option("--corpus", pt.corpus_dir, "Corpus directory or manifest")
      ->required();
  pretrain->add_option("--out", pt.out_dir, "Run directory")->required();
  pretrain->add_option("--resume", pt.resume, "Checkpoint to resume from");
  ptf.bind(pretrain);
  pretrain->callback([&] {
    trainer::TrainConfig cfg = ptf.build();
    action = [&, cfg]() {
      corpus::Corpus c = load_corpus(pt.corpus_dir);
      std::string ck = trainer::pretrain(c, cfg, pt.out_dir, pt.resume);
      out << "checkpoint: " << ck << "\n";
      out << "log: " << (fs::path(pt.out_dir) / "train_log.csv").string()
          << "\n";
      return 0;
    };
  });

  // ---- probe ----
  auto* probe_cmd = app.add_subcommand(
      "probe", "Linear probe of frozen representations");
  struct {
    std::string checkpoint, corpus_dir, out_dir, task = "frame_class";
    double fraction = 1.0;
    uint64_t seed = 0;
  } pr;
  probe_cmd->add_option("--checkpoint", pr.checkpoint, "Model checkpoint")
      ->required();
  probe_cmd->add_option("--corpus", pr.corpus_dir, "Labeled corpus")
      ->required();
  probe_cmd->add_option("--out", pr.out_dir, "Output directory")->required();
  probe_cmd
      ->add_option("--task", pr.task,
                   "frame_class, speaker, or one_shot_speaker")
      ->check(CLI::IsMember({"frame_class", "speaker", "one_shot_speaker"}));
  probe_cmd->add_option("--fraction", pr.fraction,
                        "Fraction of training labels to keep");
  probe_cmd->add_option("--seed", pr.seed, "Split/subsample seed");
  probe_cmd->callback([&] {
    probe::ProbeTask task;
    task.label_fraction = pr.fraction;
    task.validate();
    action = [&]() {
      probe::ProbeTask task;
      task.kind = pr.task == "frame_class" ? probe::TaskKind::kFrameClass
                  : pr.task == "speaker"   ? probe::TaskKind::kSpeaker
                                           : probe::TaskKind::kOneShotSpeaker;
      task.label_fraction = pr.fraction;
      task.seed = pr.seed;
      corpus::Corpus c = load_corpus(pr.corpus_dir);
      std::string cache = (fs::path(pr.out_dir) / "cache").string();
      probe::ProbeResult r = probe::run_probe(pr.checkpoint, c, task, cache);
      std::string csv =
          "task,label_fraction,accuracy,train_size,test_size,checkpoint\n";
      csv += pr.task + "," + io::g17(pr.fraction) + "," + io::g17(r.accuracy) +
             "," + std::to_string(r.train_size) + "," +
             std::to_string(r.test_size) + "," + r.checkpoint_id + "\n";
      io::atomic_write((fs::path(pr.out_dir) / "probe.csv").string(), csv);
      std::string per_class = "class,accuracy\n";
      for (size_t k = 0; k < r.per_class.size(); ++k)
        per_class +=
            std::to_string(k) + "," + io::g17(r.per_class[k]) + "\n";
      io::atomic_write(
          (fs::path(pr.out_dir) / "probe_per_class.csv").string(), per_class);
      out << pr.task << " accuracy: " << fmt("%.4f", r.accuracy) << " (train "
          << r.train_size << ", test " << r.test_size << ")\n";
      return 0;
    };
  });

  // ---- sweep ----
  auto* sweep = app.add_subcommand(
      "sweep", "Label-budget curves: pretrained vs scratch");
  struct {
    std::string checkpoint, corpus_dir, out_dir;
    std::vector<double> fractions = {0.1, 1.0};
    uint64_t seed = 0;
    int64_t ft_epochs = 6, ft_batch = 8;
    double ft_lr = 1e-3;
  } sw;
  sweep->add_option("--checkpoint", sw.checkpoint, "Pretrained checkpoint")
      ->required();
  sweep->add_option("--corpus", sw.corpus_dir, "Labeled corpus")->required();
  sweep->add_option("--out", sw.out_dir, "Output directory")->required();
  sweep->add_option("--fractions", sw.fractions, "Label fractions to sweep")
      ->delimiter(',');
  sweep->add_option("--seed", sw.seed, "Sweep seed");
  sweep->add_option("--finetune-epochs", sw.ft_epochs, "Fine-tune epochs");
  sweep->add_option("--finetune-batch", sw.ft_batch,
                    "Fine-tune utterances per step");
  sweep->add_option("--finetune-lr", sw.ft_lr, "Fine-tune learning rate");
  sweep->callback([&] {
    for (double f : sw.fractions)
      if (!(f > 0.0) || f > 1.0)
        throw Error("sweep fraction must be in (0, 1], got " + io::g17(f));
    action = [&]() {
      corpus::Corpus c = load_corpus(sw.corpus_dir);
      probe::SweepOptions opt;
      opt.fractions = sw.fractions;
      opt.seed = sw.seed;
      opt.finetune_epochs = sw.ft_epochs;
      opt.finetune_batch = sw.ft_batch;
      opt.finetune_lr = sw.ft_lr;
      std::string csv_path = (fs::path(sw.out_dir) / "sweep.csv").string();
      std::string cache = (fs::path(sw.out_dir) / "cache").string();
      std::vector<probe::SweepRow> rows =
          probe::data_efficiency_sweep(sw.checkpoint, c, opt, csv_path, cache);
      std::vector<Series> series(4);
      series[0].name = "finetune pretrained";
      series[1].name = "finetune scratch";
      series[2].name = "probe pretrained";
      series[3].name = "probe scratch";
      for (const auto& r : rows) {
        size_t base = r.init == "pretrained" ? 0 : 1;
        series[base].points.push_back({r.fraction, r.finetune_accuracy});
        series[base + 2].points.push_back({r.fraction, r.probe_accuracy});
      }
      write_line_chart((fs::path(sw.out_dir) / "sweep.svg").string(),
                       "frame-class accuracy vs label budget",
                       "label fraction", "accuracy", series);
      for (const auto& r : rows)
        out << fmt("%.4g", r.fraction) << " " << r.init
            << ": probe " << fmt("%.4f", r.probe_accuracy) << ", finetune "
            << fmt("%.4f", r.finetune_accuracy) << "\n";
      out << "wrote " << csv_path << "\n";
      return 0;
    };
  });

  // ---- ablate ----
  auto* ablate = app.add_subcommand(
      "ablate", "Pretrain objective ablations and probe each variant");
  TrainFlags abf;
  struct {
    std::string corpus_dir, out_dir;
  } ab;
  ablate->add_option("--corpus", ab.corpus_dir, "Corpus directory or manifest")
      ->required();
  ablate->add_option("--out", ab.out_dir, "Output directory")->required();
  abf.bind(ablate);
  ablate->callback([&] {
    trainer::TrainConfig cfg = abf.build();
    action = [&, cfg]() {
      corpus::Corpus c = load_corpus(ab.corpus_dir);
      std::vector<probe::AblationRow> rows =
          probe::ablation_suite(c, cfg, ab.out_dir);
      for (const auto& r : rows)
        out << r.variant << ": frame_class " << fmt("%.4f", r.frame_class)
            << " (" << fmt("%+.4f", r.frame_class_delta) << "), one_shot "
            << fmt("%.4f", r.one_shot_speaker) << " ("
            << fmt("%+.4f", r.one_shot_delta) << ") [" << r.status << "]\n";
      out << "wrote "
          << (fs::path(ab.out_dir) / "ablation.csv").string() << "\n";
      return 0;
    };
  });

  // ---- features ----
  auto* features = app.add_subcommand(
      "features", "Dump the frame-level regression targets of a waveform");
  struct {
    std::string wav, corpus_dir, id, out_dir;
    uint64_t seed = 0;
  } fe;
  features->add_option("--wav", fe.wav, "WAV file to analyze");
  features->add_option("--corpus", fe.corpus_dir,
                       "Corpus holding the utterance");
  features->add_option("--id", fe.id, "Utterance id inside --corpus");
  features->add_option("--out", fe.out_dir, "Output directory")->required();
  features->add_option("--seed", fe.seed, "Unused; accepted for uniformity");
  features->callback([&] {
    if (fe.wav.empty() == (fe.corpus_dir.empty() || fe.id.empty()))
      throw Error("features: pass either --wav or --corpus with --id");
    action = [&]() {
      dsp::Waveform wave;
      std::string base;
      if (!fe.wav.empty()) {
        wave = corpus::read_wav(fe.wav);
        base = fs::path(fe.wav).stem().string();
      } else {
        corpus::Corpus c = load_corpus(fe.corpus_dir);
        auto it = std::find_if(
            c.utterances.begin(), c.utterances.end(),
            [&](const corpus::Utterance& u) { return u.id == fe.id; });
        if (it == c.utterances.end())
          throw Error("utterance not found: " + fe.id);
        wave = it->wave;
        base = fe.id;
      }
      objectives::FeatureSet set = objectives::compute_features(wave);
      for (auto kind : encoder::kAllTargetKinds) {
        const Array& a = set.of(kind);
        std::string name =
            base + "_" + encoder::target_kind_name(kind) + ".arr";
        io::write_array_file((fs::path(fe.out_dir) / name).string(), a);
        out << encoder::target_kind_name(kind) << ": " << a.shape()[0]
            << " x " << a.shape()[1] << " -> " << name << "\n";
      }
      return 0;
    };
  });

  // ---- maskplan ----
  auto* maskplan = app.add_subcommand(
      "maskplan", "Show the masked segments drawn for a frame count");
  struct {
    int64_t frames = 0;
    uint64_t seed = 0;
  } mp;
  maskplan->add_option("--frames", mp.frames, "Crop length in frames")
      ->required();
  maskplan->add_option("--seed", mp.seed, "Plan seed");
  maskplan->callback([&] {
    if (mp.frames < 1) throw Error("maskplan: --frames must be positive");
    action = [&]() {
      objectives::MaskPlan plan = objectives::plan_masks(mp.frames, mp.seed);
      out << "frames: " << plan.n_frames << "\n";
      if (plan.too_short) {
        out << "too short to mask (needs at least "
            << objectives::kSegmentFrames << " frames)\n";
        return 0;
      }
      out << "segments: " << plan.segments.size() << "\n";
      for (int64_t s : plan.segments)
        out << "segment: [" << s << ", " << s + objectives::kSegmentFrames
            << ")\n";
      double pct = 100.0 * static_cast<double>(plan.masked.size()) /
                   static_cast<double>(plan.n_frames);
      out << "coverage: " << fmt("%.4g", pct) << " % (" << plan.masked.size()
          << "/" << plan.n_frames << " frames)\n";
      return 0;
    };
  });

  // ---- gradcheck ----
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference check of the full training loss");
  struct {
    std::string scale = "tiny";
    uint64_t seed = 0;
  } gc;
  gradcheck->add_option("--scale", gc.scale, "Model scale (tiny)")
      ->check(CLI::IsMember({"tiny"}));
  gradcheck->add_option("--seed", gc.seed, "Data/model seed");
  gradcheck->callback([&] {
    action = [&]() {
      GradcheckReport r = run_gradcheck(gc.seed);
      out << "parameters: " << r.params << "\n";
      out << "checked coordinates: " << r.checked << "\n";
      out << "max relative error: " << fmt("%.3e", r.max_rel_err) << "\n";
      if (r.max_rel_err < 1e-4) {
        out << "PASS (tolerance 1e-04)\n";
        return 0;
      }
      out << "FAIL (tolerance 1e-04)\n";
      return 2;
    };
  });

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    while (!target->get_subcommands().empty())
      target = target->get_subcommands()[0];
    out << target->help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n"
        << "run 'mgf --help' for usage\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    return action();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace mgf::cli
