// core/src/probe.cc

#include "mgf/probe.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mgf/encoder.hpp"
#include "mgf/error.hpp"
#include "mgf/io_util.hpp"
#include "mgf/parallel.hpp"
#include "mgf/rng.hpp"

namespace mgf::probe {

namespace fs = std::filesystem;

namespace {

using EMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<EMat>;
using CMapMat = Eigen::Map<const EMat>;

void seeded_shuffle(std::vector<int64_t>& v, uint64_t seed) {
  Rng rng(seed);
  for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
    int64_t j =
        static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(i + 1)));
    std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
  }
}

int64_t ceil_fifth(int64_t n) { return (n + 4) / 5; }  // ceil(0.2 n)

// Utterance indices grouped by speaker, speakers in ascending id order.
std::map<int, std::vector<int64_t>> by_speaker(const corpus::Corpus& c) {
  std::map<int, std::vector<int64_t>> groups;
  for (size_t i = 0; i < c.utterances.size(); ++i)
    groups[c.utterances[i].speaker_id].push_back(static_cast<int64_t>(i));
  return groups;
}

struct UttSplit {
  std::vector<int64_t> train, test;
};

// Held-out 20 % of each speaker's utterances (at least one when the speaker
// has two or more); single-utterance speakers stay in train.
UttSplit holdout_split(const corpus::Corpus& c, uint64_t seed) {
  UttSplit split;
  uint64_t base = derive_seed(seed, "holdout");
  for (auto& [spk, utts] : by_speaker(c)) {
    std::vector<int64_t> order = utts;
    seeded_shuffle(order, derive_seed(base, static_cast<uint64_t>(spk)));
    int64_t n = static_cast<int64_t>(order.size());
    int64_t n_test = n >= 2 ? ceil_fifth(n) : 0;
    for (int64_t i = 0; i < n; ++i)
      (i < n - n_test ? split.train : split.test)
          .push_back(order[static_cast<size_t>(i)]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// Class-stratified subsample: keeps floor(fraction * count) of each class,
// erring on the side of keeping everything at fraction 1.
std::vector<int64_t> stratified_keep(const std::vector<int64_t>& labels,
                                     double fraction, uint64_t seed) {
  std::map<int64_t, std::vector<int64_t>> by_class;
  for (size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(static_cast<int64_t>(i));
  std::vector<int64_t> kept;
  uint64_t base = derive_seed(seed, "label_fraction");
  for (auto& [cls, idx] : by_class) {
    int64_t k = static_cast<int64_t>(
        std::floor(fraction * static_cast<double>(idx.size()) + 1e-9));
    if (k < 1)
      throw Error("label fraction " + io::g17(fraction) + " leaves class " +
                  std::to_string(cls) + " with no training examples");
    seeded_shuffle(idx, derive_seed(base, static_cast<uint64_t>(cls)));
    kept.insert(kept.end(), idx.begin(), idx.begin() + k);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

Array mean_pooled(const Array& rep) {
  int64_t n = rep.shape()[0], d = rep.shape()[1];
  Array out({d});
  CMapMat m(rep.data(), n, d);
  Eigen::Map<Eigen::RowVectorXd>(out.data(), d) =
      m.colwise().mean();
  return out;
}

Array stack_rows(const std::vector<const double*>& rows, int64_t d) {
  Array out({static_cast<int64_t>(rows.size()), d});
  for (size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r], rows[r] + d, out.data() + static_cast<int64_t>(r) * d);
  return out;
}

void check_frame_alignment(const RepSet& reps, const corpus::Corpus& c) {
  for (size_t i = 0; i < c.utterances.size(); ++i) {
    const auto& u = c.utterances[i];
    if (!u.has_labels()) continue;
    int64_t rows = reps.reps[i].shape()[0];
    if (rows != static_cast<int64_t>(u.frame_labels.size()))
      throw Error("frame-rate mismatch for utterance " + u.id + ": " +
                  std::to_string(rows) + " representation frames vs " +
                  std::to_string(u.frame_labels.size()) + " labels");
  }
}

}  // namespace

void ProbeTask::validate() const {
  if (!(label_fraction > 0.0) || label_fraction > 1.0)
    throw Error("probe task: label_fraction must be in (0, 1], got " +
                io::g17(label_fraction));
}

RepSet extract_representations(const std::string& checkpoint_path,
                               const corpus::Corpus& corpus,
                               const std::string& cache_dir) {
  trainer::Checkpoint ck = trainer::load_checkpoint(checkpoint_path);
  RepSet out;
  out.checkpoint_id = io::sha256_file(checkpoint_path);
  fs::create_directories(fs::path(cache_dir) / out.checkpoint_id);
  out.reps.resize(corpus.utterances.size());
  parallel_for(static_cast<int64_t>(corpus.utterances.size()),
               [&](int64_t i) {
                 const auto& u = corpus.utterances[static_cast<size_t>(i)];
                 std::string f = (fs::path(cache_dir) / out.checkpoint_id /
                                  (u.id + ".arr"))
                                     .string();
                 if (fs::exists(f)) {
                   out.reps[static_cast<size_t>(i)] = io::read_array_file(f);
                 } else {
                   out.reps[static_cast<size_t>(i)] =
                       encoder::representation_of(u.wave, ck.state.model);
                   io::write_array_file(f, out.reps[static_cast<size_t>(i)]);
                 }
               });
  check_frame_alignment(out, corpus);
  return out;
}

OneShotSplit one_shot_split(const corpus::Corpus& corpus, uint64_t seed) {
  OneShotSplit split;
  uint64_t base = derive_seed(seed, "one_shot");
  for (auto& [spk, utts] : by_speaker(corpus)) {
    if (utts.size() < 2) {
      split.warnings.push_back(
          "speaker " + std::to_string(spk) +
          " has a single utterance and is excluded from the one-shot split");
      continue;
    }
    std::vector<int64_t> order = utts;
    seeded_shuffle(order, derive_seed(base, static_cast<uint64_t>(spk)));
    split.train.push_back(order[0]);
    int64_t n_test = ceil_fifth(static_cast<int64_t>(order.size()) - 1);
    for (int64_t i = 1; i <= n_test; ++i)
      split.test.push_back(order[static_cast<size_t>(i)]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

ProbeData assemble(const RepSet& reps, const corpus::Corpus& corpus,
                   const ProbeTask& task) {
  task.validate();
  if (reps.reps.size() != corpus.utterances.size())
    throw Error("probe: representation set does not match the corpus");
  ProbeData data;

  if (task.kind == TaskKind::kFrameClass) {
    data.classes = corpus.class_count;
    UttSplit split = holdout_split(corpus, task.seed);
    if (split.test.empty())
      throw Error("frame probe split has no test utterances");
    auto gather = [&](const std::vector<int64_t>& utts, Array& x,
                      std::vector<int64_t>& y) {
      std::vector<const double*> rows;
      int64_t d = reps.reps[0].shape()[1];
      for (int64_t ui : utts) {
        const auto& u = corpus.utterances[static_cast<size_t>(ui)];
        if (!u.has_labels())
          throw Error("frame probe needs labels; utterance " + u.id +
                      " has none");
        const Array& r = reps.reps[static_cast<size_t>(ui)];
        for (int64_t f = 0; f < r.shape()[0]; ++f) {
          rows.push_back(r.data() + f * d);
          y.push_back(u.frame_labels[static_cast<size_t>(f)]);
        }
      }
      x = stack_rows(rows, d);
    };
    std::vector<int64_t> train_y, test_y;
    Array train_x, test_x;
    gather(split.train, train_x, train_y);
    gather(split.test, test_x, test_y);
    if (task.label_fraction < 1.0) {
      std::vector<int64_t> kept =
          stratified_keep(train_y, task.label_fraction, task.seed);
      int64_t d = train_x.shape()[1];
      std::vector<const double*> rows;
      std::vector<int64_t> y;
      for (int64_t i : kept) {
        rows.push_back(train_x.data() + i * d);
        y.push_back(train_y[static_cast<size_t>(i)]);
      }
      train_x = stack_rows(rows, d);
      train_y = std::move(y);
    }
    data.train_x = std::move(train_x);
    data.test_x = std::move(test_x);
    data.train_y = std::move(train_y);
    data.test_y = std::move(test_y);
    return data;
  }

  // Speaker tasks: one mean-pooled vector per utterance.
  data.classes = corpus.speaker_count;
  std::vector<int64_t> train_utts, test_utts;
  if (task.kind == TaskKind::kOneShotSpeaker) {
    OneShotSplit split = one_shot_split(corpus, task.seed);
    train_utts = split.train;
    test_utts = split.test;
  } else {
    UttSplit split = holdout_split(corpus, task.seed);
    train_utts = split.train;
    test_utts = split.test;
  }
  if (test_utts.empty()) throw Error("speaker probe split has no test utterances");
  auto gather = [&](const std::vector<int64_t>& utts, Array& x,
                    std::vector<int64_t>& y) {
    int64_t d = reps.reps[0].shape()[1];
    x = Array({static_cast<int64_t>(utts.size()), d});
    for (size_t r = 0; r < utts.size(); ++r) {
      Array pooled = mean_pooled(reps.reps[static_cast<size_t>(utts[r])]);
      std::copy(pooled.data(), pooled.data() + d,
                x.data() + static_cast<int64_t>(r) * d);
      y.push_back(corpus.utterances[static_cast<size_t>(utts[r])].speaker_id);
    }
  };
  gather(train_utts, data.train_x, data.train_y);
  gather(test_utts, data.test_x, data.test_y);
  if (task.label_fraction < 1.0) {
    std::vector<int64_t> kept =
        stratified_keep(data.train_y, task.label_fraction, task.seed);
    int64_t d = data.train_x.shape()[1];
    std::vector<const double*> rows;
    std::vector<int64_t> y;
    for (int64_t i : kept) {
      rows.push_back(data.train_x.data() + i * d);
      y.push_back(data.train_y[static_cast<size_t>(i)]);
    }
    data.train_x = stack_rows(rows, d);
    data.train_y = std::move(y);
  }
  return data;
}

ProbeResult train_linear_probe(const ProbeData& data) {
  int64_t n = data.train_x.shape()[0];
  int64_t d = data.train_x.shape()[1];
  int64_t c = data.classes;
  if (n < 1 || data.test_x.shape()[0] < 1)
    throw Error("probe training needs nonempty train and test splits");
  if (static_cast<int64_t>(data.train_y.size()) != n ||
      data.test_x.shape()[1] != d)
    throw Error("probe data: features and labels are misaligned");
  for (int64_t y : data.train_y)
    if (y < 0 || y >= c)
      throw Error("probe label " + std::to_string(y) + " outside " +
                  std::to_string(c) + " classes");
  {
    std::vector<int64_t> distinct = data.train_y;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()),
                   distinct.end());
    if (distinct.size() < 2)
      throw Error("degenerate single-class training split for probe");
  }

  // Standardize by training statistics.
  CMapMat xtr(data.train_x.data(), n, d);
  Eigen::RowVectorXd mean = xtr.colwise().mean();
  Eigen::RowVectorXd var =
      (xtr.rowwise() - mean).array().square().colwise().mean().matrix();
  Eigen::RowVectorXd inv_std =
      (var.array() + 1e-8).sqrt().inverse().matrix();
  EMat xs =
      ((xtr.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
  int64_t n_test = data.test_x.shape()[0];
  CMapMat xte(data.test_x.data(), n_test, d);
  EMat xs_test =
      ((xte.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();

  EMat onehot = EMat::Zero(n, c);
  for (int64_t i = 0; i < n; ++i)
    onehot(i, data.train_y[static_cast<size_t>(i)]) = 1.0;

  Array w({d, c}), b({c});
  Array w_m1({d, c}), w_m2({d, c}), b_m1({c}), b_m2({c});
  const double lr = 0.05;
  for (int64_t epoch = 1; epoch <= 100; ++epoch) {
    MapMat wm(w.data(), d, c);
    EMat logits = (xs * wm).rowwise() +
                  Eigen::Map<Eigen::RowVectorXd>(b.data(), c);
    EMat p =
        (logits.colwise() - logits.rowwise().maxCoeff()).array().exp().matrix();
    p.array().colwise() /= p.rowwise().sum().array();
    EMat g = (p - onehot) / static_cast<double>(n);
    Array gw({d, c}), gb({c});
    MapMat(gw.data(), d, c) = xs.transpose() * g;
    Eigen::Map<Eigen::RowVectorXd>(gb.data(), c) = g.colwise().sum();
    trainer::adam_update(w, gw, 1.0, w_m1, w_m2, epoch, lr);
    trainer::adam_update(b, gb, 1.0, b_m1, b_m2, epoch, lr);
  }

  ProbeResult result;
  result.train_size = n;
  result.test_size = n_test;
  EMat logits = (xs_test * MapMat(w.data(), d, c)).rowwise() +
                Eigen::Map<Eigen::RowVectorXd>(b.data(), c);
  std::vector<int64_t> correct(static_cast<size_t>(c), 0),
      total(static_cast<size_t>(c), 0);
  int64_t hits = 0;
  for (int64_t i = 0; i < n_test; ++i) {
    int64_t pred = 0;
    logits.row(i).maxCoeff(&pred);
    int64_t truth = data.test_y[static_cast<size_t>(i)];
    if (truth < 0 || truth >= c)
      throw Error("probe label " + std::to_string(truth) + " outside " +
                  std::to_string(c) + " classes");
    ++total[static_cast<size_t>(truth)];
    if (pred == truth) {
      ++hits;
      ++correct[static_cast<size_t>(truth)];
    }
  }
  result.accuracy = static_cast<double>(hits) / static_cast<double>(n_test);
  result.per_class.resize(static_cast<size_t>(c));
  for (int64_t k = 0; k < c; ++k)
    result.per_class[static_cast<size_t>(k)] =
        total[static_cast<size_t>(k)] == 0
            ? std::numeric_limits<double>::quiet_NaN()
            : static_cast<double>(correct[static_cast<size_t>(k)]) /
                  static_cast<double>(total[static_cast<size_t>(k)]);
  return result;
}

ProbeResult run_probe(const std::string& checkpoint_path,
                      const corpus::Corpus& corpus, const ProbeTask& task,
                      const std::string& cache_dir) {
  RepSet reps = extract_representations(checkpoint_path, corpus, cache_dir);
  ProbeResult result = train_linear_probe(assemble(reps, corpus, task));
  result.checkpoint_id = reps.checkpoint_id;
  return result;
}

namespace {

// Full-model fine-tune: affine frame classifier on top of the encoder, all
// parameters trained, cross-entropy on the kept labeled frames of the train
// utterances. Returns frame accuracy over the test utterances.
double finetune_frame_classifier(encoder::Model model,
                                 const corpus::Corpus& corpus,
                                 const std::vector<int64_t>& train_utts,
                                 const std::vector<std::vector<int64_t>>& kept,
                                 const std::vector<int64_t>& test_utts,
                                 int64_t classes, const SweepOptions& opt,
                                 uint64_t seed) {
  int64_t d = model.cfg.d_model;
  auto head_w = ad::leaf(Array({d, classes}));
  auto head_b = ad::leaf(Array({classes}));

  std::map<std::string, Array> m1, m2;
  for (auto& [name, t] : model.params) {
    m1.emplace(name, Array(t->value.shape()));
    m2.emplace(name, Array(t->value.shape()));
  }
  m1.emplace("head_w", Array({d, classes}));
  m2.emplace("head_w", Array({d, classes}));
  m1.emplace("head_b", Array({classes}));
  m2.emplace("head_b", Array({classes}));

  std::vector<int64_t> order(train_utts.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
  int64_t step = 0;
  for (int64_t epoch = 0; epoch < opt.finetune_epochs; ++epoch) {
    seeded_shuffle(order, derive_seed(derive_seed(seed, "finetune_epoch"),
                                      static_cast<uint64_t>(epoch)));
    for (size_t lo = 0; lo < order.size();
         lo += static_cast<size_t>(opt.finetune_batch)) {
      size_t hi = std::min(order.size(),
                           lo + static_cast<size_t>(opt.finetune_batch));
      std::vector<ad::Tensor> parts;
      int64_t n_kept = 0;
      for (size_t oi = lo; oi < hi; ++oi) {
        int64_t local = order[oi];
        const auto& frames = kept[static_cast<size_t>(local)];
        if (frames.empty()) continue;
        const auto& u =
            corpus.utterances[static_cast<size_t>(train_utts[local])];
        auto rep = encoder::encode(
            encoder::stem_forward(encoder::waveform_input(u.wave), model),
            model);
        auto picked = ad::gather_rows(rep, frames);
        auto logits = ad::add_rowvec(ad::matmul(picked, head_w), head_b);
        std::vector<int64_t> labels;
        for (int64_t f : frames)
          labels.push_back(u.frame_labels[static_cast<size_t>(f)]);
        auto ce = ad::sub(ad::logsumexp_rows(logits),
                          ad::take_per_row(logits, labels));
        parts.push_back(ad::sum_all(ce));
        n_kept += static_cast<int64_t>(frames.size());
      }
      if (parts.empty()) continue;
      auto total = parts[0];
      for (size_t i = 1; i < parts.size(); ++i) total = ad::add(total, parts[i]);
      auto loss = ad::mul_scalar(total, 1.0 / static_cast<double>(n_kept));
      encoder::zero_grads(model);
      head_w->has_grad = head_b->has_grad = false;
      head_w->grad = Array();
      head_b->grad = Array();
      ad::backward(loss);
      ++step;

      double sq = 0.0;
      auto accumulate = [&sq](const ad::Tensor& t) {
        if (!t->has_grad) return;
        for (int64_t i = 0; i < t->grad.numel(); ++i)
          sq += t->grad.at(i) * t->grad.at(i);
      };
      for (auto& [name, t] : model.params) accumulate(t);
      accumulate(head_w);
      accumulate(head_b);
      double norm = std::sqrt(sq);
      double clip =
          norm > trainer::kClipNorm ? trainer::kClipNorm / norm : 1.0;

      double lr = opt.finetune_lr;
      for (auto& [name, t] : model.params)
        trainer::adam_update(t->value, t->has_grad ? t->grad : Array(), clip,
                             m1.at(name), m2.at(name), step, lr);
      trainer::adam_update(head_w->value,
                           head_w->has_grad ? head_w->grad : Array(), clip,
                           m1.at("head_w"), m2.at("head_w"), step, lr);
      trainer::adam_update(head_b->value,
                           head_b->has_grad ? head_b->grad : Array(), clip,
                           m1.at("head_b"), m2.at("head_b"), step, lr);
    }
  }

  int64_t hits = 0, total_frames = 0;
  for (int64_t ui : test_utts) {
    const auto& u = corpus.utterances[static_cast<size_t>(ui)];
    Array rep = encoder::representation_of(u.wave, model);
    int64_t rows = rep.shape()[0];
    CMapMat r(rep.data(), rows, d);
    EMat logits = (r * CMapMat(head_w->value.data(), d, classes)).rowwise() +
                  Eigen::Map<Eigen::RowVectorXd>(head_b->value.data(), classes);
    for (int64_t f = 0; f < rows; ++f) {
      int64_t pred = 0;
      logits.row(f).maxCoeff(&pred);
      if (pred == u.frame_labels[static_cast<size_t>(f)]) ++hits;
      ++total_frames;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total_frames);
}

}  // namespace

std::vector<SweepRow> data_efficiency_sweep(const std::string& checkpoint_path,
                                            const corpus::Corpus& corpus,
                                            const SweepOptions& opt,
                                            const std::string& out_csv,
                                            const std::string& cache_dir) {
  if (opt.fractions.empty())
    throw Error("data-efficiency sweep needs at least one fraction");
  for (double f : opt.fractions)
    if (!(f > 0.0) || f > 1.0)
      throw Error("sweep fraction must be in (0, 1], got " + io::g17(f));

  trainer::Checkpoint pre = trainer::load_checkpoint(checkpoint_path);
  trainer::TrainConfig scratch_cfg = pre.cfg;
  scratch_cfg.seed = derive_seed(opt.seed, "scratch");
  trainer::TrainState scratch = trainer::init_state(scratch_cfg);
  fs::create_directories(cache_dir);
  std::string scratch_path =
      (fs::path(cache_dir) / "scratch_init.mgf").string();
  trainer::save_checkpoint(scratch, scratch_cfg, scratch_path);

  struct Init {
    const char* name;
    std::string path;
    const encoder::Model* model;
  };
  Init inits[2] = {{"pretrained", checkpoint_path, &pre.state.model},
                   {"scratch", scratch_path, &scratch.model}};

  UttSplit split = holdout_split(corpus, opt.seed);
  if (split.test.empty())
    throw Error("data-efficiency sweep has no test utterances");
  int64_t test_frames = 0;
  for (int64_t ui : split.test)
    test_frames += static_cast<int64_t>(
        corpus.utterances[static_cast<size_t>(ui)].frame_labels.size());

  std::vector<SweepRow> rows;
  std::string csv = std::string(kSweepHeader) + "\n";
  for (double f : opt.fractions) {
    // The probe path and the fine-tune path must agree on which labeled
    // frames survive the budget, so the subsample is computed once from the
    // concatenated train labels.
    std::vector<int64_t> train_labels;
    std::vector<int64_t> frame_utt, frame_in_utt;
    for (size_t pos = 0; pos < split.train.size(); ++pos) {
      const auto& u =
          corpus.utterances[static_cast<size_t>(split.train[pos])];
      if (!u.has_labels())
        throw Error("frame probe needs labels; utterance " + u.id +
                    " has none");
      for (size_t fi = 0; fi < u.frame_labels.size(); ++fi) {
        train_labels.push_back(u.frame_labels[fi]);
        frame_utt.push_back(static_cast<int64_t>(pos));
        frame_in_utt.push_back(static_cast<int64_t>(fi));
      }
    }
    std::vector<int64_t> kept_flat;
    if (f < 1.0) {
      kept_flat = stratified_keep(train_labels, f, opt.seed);
    } else {
      kept_flat.resize(train_labels.size());
      for (size_t i = 0; i < kept_flat.size(); ++i)
        kept_flat[i] = static_cast<int64_t>(i);
    }
    std::vector<std::vector<int64_t>> kept_per_utt(split.train.size());
    for (int64_t i : kept_flat)
      kept_per_utt[static_cast<size_t>(frame_utt[static_cast<size_t>(i)])]
          .push_back(frame_in_utt[static_cast<size_t>(i)]);

    for (const Init& init : inits) {
      ProbeTask task;
      task.kind = TaskKind::kFrameClass;
      task.label_fraction = f;
      task.seed = opt.seed;
      ProbeResult probe = run_probe(init.path, corpus, task, cache_dir);
      double ft = finetune_frame_classifier(
          *init.model, corpus, split.train, kept_per_utt, split.test,
          corpus.class_count, opt, derive_seed(opt.seed, init.name));
      SweepRow row;
      row.fraction = f;
      row.init = init.name;
      row.probe_accuracy = probe.accuracy;
      row.finetune_accuracy = ft;
      row.train_frames = static_cast<int64_t>(kept_flat.size());
      row.test_frames = test_frames;
      rows.push_back(row);
      csv += io::g17(row.fraction) + "," + row.init + "," +
             io::g17(row.probe_accuracy) + "," +
             io::g17(row.finetune_accuracy) + "," +
             std::to_string(row.train_frames) + "," +
             std::to_string(row.test_frames) + ",synthetic\n";
    }
  }
  io::atomic_write(out_csv, csv);
  return rows;
}

std::vector<AblationRow> ablation_suite(const corpus::Corpus& corpus,
                                        const trainer::TrainConfig& base,
                                        const std::string& out_dir) {
  struct Variant {
    const char* name;
    void (*apply)(trainer::AblationFlags&);
  };
  const Variant variants[6] = {
      {"full", [](trainer::AblationFlags&) {}},
      {"drop_sample",
       [](trainer::AblationFlags& f) { f.drop_sample = true; }},
      {"drop_frame", [](trainer::AblationFlags& f) { f.drop_frame = true; }},
      {"drop_phoneme",
       [](trainer::AblationFlags& f) { f.drop_phoneme = true; }},
      {"drop_sentence",
       [](trainer::AblationFlags& f) { f.drop_sentence = true; }},
      {"generative_phoneme",
       [](trainer::AblationFlags& f) { f.generative_phoneme = true; }},
  };

  fs::create_directories(out_dir);
  std::string cache_dir = (fs::path(out_dir) / "cache").string();
  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    AblationRow row;
    row.variant = v.name;
    try {
      trainer::TrainConfig cfg = base;
      cfg.ablation = trainer::AblationFlags{};
      v.apply(cfg.ablation);
      std::string run_dir = (fs::path(out_dir) / v.name).string();
      std::string ck = trainer::pretrain(corpus, cfg, run_dir);
      ProbeTask frame_task;
      frame_task.kind = TaskKind::kFrameClass;
      frame_task.seed = base.seed;
      ProbeTask one_shot_task;
      one_shot_task.kind = TaskKind::kOneShotSpeaker;
      one_shot_task.seed = base.seed;
      row.frame_class = run_probe(ck, corpus, frame_task, cache_dir).accuracy;
      row.one_shot_speaker =
          run_probe(ck, corpus, one_shot_task, cache_dir).accuracy;
      row.status = "ok";
    } catch (const std::exception& e) {
      row.frame_class = std::numeric_limits<double>::quiet_NaN();
      row.one_shot_speaker = std::numeric_limits<double>::quiet_NaN();
      std::string why = e.what();
      for (char& ch : why)
        if (ch == ',' || ch == '\n') ch = ';';
      row.status = "failed: " + why;
    }
    rows.push_back(row);
  }

  double full_frame = rows[0].frame_class;
  double full_one_shot = rows[0].one_shot_speaker;
  std::string csv = std::string(kAblationHeader) + "\n";
  for (AblationRow& row : rows) {
    row.frame_class_delta = row.frame_class - full_frame;
    row.one_shot_delta = row.one_shot_speaker - full_one_shot;
    csv += row.variant + "," + io::g17(row.frame_class) + "," +
           io::g17(row.one_shot_speaker) + "," +
           io::g17(row.frame_class_delta) + "," +
           io::g17(row.one_shot_delta) + "," + row.status + "\n";
  }
  io::atomic_write((fs::path(out_dir) / "ablation.csv").string(), csv);
  return rows;
}

}  // namespace mgf::probe
