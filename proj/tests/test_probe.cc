// tests/test_probe.cc

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mgf/error.hpp"
#include "mgf/io_util.hpp"
#include "mgf/probe.hpp"

using namespace mgf;
using namespace mgf::probe;
namespace fs = std::filesystem;

namespace {

const char* kTmp = "probe_test_tmp";

struct TmpDirs {
  TmpDirs() { fs::remove_all(kTmp); }
  ~TmpDirs() { fs::remove_all(kTmp); }
};

trainer::TrainConfig tiny_config() {
  trainer::TrainConfig cfg;
  cfg.model.stem_channels = 6;
  cfg.model.d_model = 8;
  cfg.model.heads = 2;
  cfg.model.encoder_blocks = 1;
  cfg.model.decoder_blocks = 1;
  cfg.warmup_steps = 4;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.negatives = 4;
  cfg.crop_samples = 12800;
  return cfg;
}

corpus::Corpus tiny_corpus(double seconds = 1.2, uint64_t seed = 0) {
  corpus::SynthSpec spec;
  spec.class_count = 2;
  spec.speaker_count = 2;
  spec.utterances_per_speaker = 4;
  spec.utterance_seconds = seconds;
  spec.seed = seed;
  return corpus::synth_corpus(spec);
}

// Random-init model written to disk, the probe baseline condition.
std::string write_init_checkpoint(const trainer::TrainConfig& cfg,
                                  const std::string& path) {
  trainer::TrainState state = trainer::init_state(cfg);
  trainer::save_checkpoint(state, cfg, path);
  return path;
}

}  // namespace

TEST_CASE("array files round-trip bit-exactly") {
  TmpDirs guard;
  fs::create_directories(kTmp);
  std::string path = std::string(kTmp) + "/x.arr";
  Array a({2, 3});
  double vals[6] = {1.0 / 3.0, -0.0, 3.141592653589793, -1e308, 5e-324, 42.0};
  for (int64_t i = 0; i < 6; ++i) a.at(i) = vals[i];
  io::write_array_file(path, a);
  Array b = io::read_array_file(path);
  REQUIRE(b.shape() == std::vector<int64_t>{2, 3});
  for (int64_t i = 0; i < 6; ++i) {
    CHECK(b.at(i) == vals[i]);
    CHECK(std::signbit(b.at(i)) == std::signbit(vals[i]));
  }

  std::string junk = std::string(kTmp) + "/junk.arr";
  { std::ofstream(junk, std::ios::binary) << "JUNKJUNKJUNKJUNK"; }
  CHECK_THROWS_WITH_AS(io::read_array_file(junk),
                       doctest::Contains("not an .arr file"), Error);
  std::string cut = std::string(kTmp) + "/cut.arr";
  std::string bytes = io::read_file(path);
  { std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() - 5); }
  CHECK_THROWS_WITH_AS(io::read_array_file(cut),
                       doctest::Contains("corrupt .arr file"), Error);
  CHECK_THROWS_WITH_AS(io::read_file(std::string(kTmp) + "/nope"),
                       doctest::Contains("cannot open"), Error);
}

TEST_CASE("sha256 matches the published test vectors") {
  CHECK(io::sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(io::sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("representation extraction: frame rate, cache, alignment guard") {
  TmpDirs guard;
  fs::create_directories(kTmp);
  corpus::SynthSpec spec;
  spec.class_count = 2;
  spec.speaker_count = 2;
  spec.utterances_per_speaker = 1;
  spec.utterance_seconds = 2.0;
  corpus::Corpus c = corpus::synth_corpus(spec);
  trainer::TrainConfig cfg = tiny_config();
  std::string ck = write_init_checkpoint(cfg, std::string(kTmp) + "/init.mgf");
  std::string cache = std::string(kTmp) + "/cache";

  RepSet first = extract_representations(ck, c, cache);
  CHECK(first.checkpoint_id == io::sha256_file(ck));
  REQUIRE(first.reps.size() == 2);
  for (const Array& r : first.reps) {
    CHECK(r.shape() == std::vector<int64_t>{200, 8});
  }
  CHECK(fs::exists(fs::path(cache) / first.checkpoint_id /
                   (c.utterances[0].id + ".arr")));

  RepSet second = extract_representations(ck, c, cache);
  for (size_t i = 0; i < first.reps.size(); ++i) {
    REQUIRE(second.reps[i].same_shape(first.reps[i]));
    for (int64_t j = 0; j < first.reps[i].numel(); ++j)
      CHECK(second.reps[i].at(j) == first.reps[i].at(j));
  }

  corpus::Corpus bad = c;
  bad.utterances[0].frame_labels.pop_back();
  CHECK_THROWS_WITH_AS(extract_representations(ck, bad, cache),
                       doctest::Contains("frame-rate mismatch"), Error);
}

TEST_CASE("one-shot split: one train utterance per speaker") {
  corpus::Corpus c = tiny_corpus();  // 2 speakers x 4 utterances
  OneShotSplit split = one_shot_split(c, 7);
  CHECK(split.train.size() == 2);
  CHECK(split.test.size() == 2);  // ceil(0.2 * 3) = 1 per speaker
  CHECK(split.warnings.empty());

  corpus::SynthSpec spec4;
  spec4.class_count = 2;
  spec4.speaker_count = 4;
  spec4.utterances_per_speaker = 4;
  spec4.utterance_seconds = 1.0;
  corpus::Corpus c4 = corpus::synth_corpus(spec4);
  OneShotSplit s4 = one_shot_split(c4, 3);
  CHECK(s4.train.size() == 4);
  CHECK(s4.test.size() == 4);

  OneShotSplit again = one_shot_split(c4, 3);
  CHECK(again.train == s4.train);
  CHECK(again.test == s4.test);
  for (int64_t t : s4.train)
    CHECK(std::find(s4.test.begin(), s4.test.end(), t) == s4.test.end());

  corpus::Corpus lone = c;
  corpus::Utterance extra = lone.utterances[0];
  extra.id = "lone";
  extra.speaker_id = 9;
  lone.utterances.push_back(extra);
  lone.speaker_count = 3;
  OneShotSplit ls = one_shot_split(lone, 1);
  REQUIRE(ls.warnings.size() == 1);
  CHECK(ls.warnings[0].find("speaker 9") != std::string::npos);
  int64_t lone_idx = static_cast<int64_t>(lone.utterances.size()) - 1;
  CHECK(std::find(ls.train.begin(), ls.train.end(), lone_idx) ==
        ls.train.end());
  CHECK(std::find(ls.test.begin(), ls.test.end(), lone_idx) == ls.test.end());
}

TEST_CASE("linear probe: separable data, degeneracy, chance level") {
  auto make_data = [](int64_t n_train, int64_t n_test, int64_t classes,
                      bool one_hot, uint64_t seed) {
    ProbeData data;
    data.classes = classes;
    Rng rng(seed);
    int64_t d = one_hot ? classes : 8;
    data.train_x = Array({n_train, d});
    data.test_x = Array({n_test, d});
    for (int64_t i = 0; i < n_train; ++i) {
      int64_t y = static_cast<int64_t>(rng.uniform_int(
          static_cast<uint64_t>(classes)));
      data.train_y.push_back(y);
      for (int64_t j = 0; j < d; ++j)
        data.train_x.at(i, j) = one_hot ? (j == y ? 1.0 : 0.0) : rng.normal();
    }
    for (int64_t i = 0; i < n_test; ++i) {
      int64_t y = static_cast<int64_t>(rng.uniform_int(
          static_cast<uint64_t>(classes)));
      data.test_y.push_back(y);
      for (int64_t j = 0; j < d; ++j)
        data.test_x.at(i, j) = one_hot ? (j == y ? 1.0 : 0.0) : rng.normal();
    }
    return data;
  };

  SUBCASE("one-hot features are learned essentially perfectly") {
    ProbeData data = make_data(200, 80, 4, true, 1);
    ProbeResult r = train_linear_probe(data);
    CHECK(r.accuracy >= 0.99);
    CHECK(r.train_size == 200);
    CHECK(r.test_size == 80);
    REQUIRE(r.per_class.size() == 4);
  }

  SUBCASE("constant labels are rejected as degenerate") {
    ProbeData data = make_data(50, 20, 3, false, 2);
    for (auto& y : data.train_y) y = 1;
    CHECK_THROWS_WITH_AS(train_linear_probe(data),
                         doctest::Contains("degenerate"), Error);
  }

  SUBCASE("random features score within 5 points of chance, 3 seeds") {
    std::vector<double> accs;
    for (uint64_t seed = 10; seed < 13; ++seed) {
      ProbeData data = make_data(600, 400, 4, false, seed);
      accs.push_back(train_linear_probe(data).accuracy);
    }
    std::sort(accs.begin(), accs.end());
    CHECK(std::abs(accs[1] - 0.25) < 0.05);
  }

  SUBCASE("training is deterministic") {
    ProbeData data = make_data(120, 60, 3, false, 4);
    ProbeResult a = train_linear_probe(data);
    ProbeResult b = train_linear_probe(data);
    CHECK(a.accuracy == b.accuracy);
    for (size_t i = 0; i < a.per_class.size(); ++i)
      if (!std::isnan(a.per_class[i]))
        CHECK(a.per_class[i] == b.per_class[i]);
  }
}

TEST_CASE("assemble: splits, label budget, stratification errors") {
  TmpDirs guard;
  fs::create_directories(kTmp);
  corpus::Corpus c = tiny_corpus();
  trainer::TrainConfig cfg = tiny_config();
  std::string ck = write_init_checkpoint(cfg, std::string(kTmp) + "/init.mgf");
  RepSet reps = extract_representations(ck, c, std::string(kTmp) + "/cache");

  int64_t total_frames = 0;
  for (const auto& u : c.utterances)
    total_frames += static_cast<int64_t>(u.frame_labels.size());

  ProbeTask task;
  task.kind = TaskKind::kFrameClass;
  task.seed = 5;
  ProbeData full = assemble(reps, c, task);
  CHECK(full.classes == 2);
  CHECK(full.train_x.shape()[0] + full.test_x.shape()[0] == total_frames);
  CHECK(full.train_x.shape()[1] == 8);
  CHECK(full.test_x.shape()[0] > 0);

  task.label_fraction = 0.5;
  ProbeData half = assemble(reps, c, task);
  CHECK(half.test_x.shape()[0] == full.test_x.shape()[0]);
  // Stratified floor: exactly floor(0.5 * count) per class.
  std::vector<int64_t> full_counts(2, 0), half_counts(2, 0);
  for (int64_t y : full.train_y) ++full_counts[static_cast<size_t>(y)];
  for (int64_t y : half.train_y) ++half_counts[static_cast<size_t>(y)];
  for (int k = 0; k < 2; ++k)
    CHECK(half_counts[static_cast<size_t>(k)] ==
          full_counts[static_cast<size_t>(k)] / 2);

  task.label_fraction = 1e-6;
  CHECK_THROWS_WITH_AS(assemble(reps, c, task),
                       doctest::Contains("leaves class"), Error);

  task.label_fraction = 0.0;
  CHECK_THROWS_WITH_AS(assemble(reps, c, task),
                       doctest::Contains("label_fraction"), Error);

  ProbeTask spk;
  spk.kind = TaskKind::kSpeaker;
  spk.seed = 5;
  ProbeData sd = assemble(reps, c, spk);
  CHECK(sd.classes == 2);
  CHECK(sd.train_x.shape()[0] + sd.test_x.shape()[0] ==
        static_cast<int64_t>(c.utterances.size()));

  ProbeTask one;
  one.kind = TaskKind::kOneShotSpeaker;
  one.seed = 5;
  ProbeData od = assemble(reps, c, one);
  CHECK(od.train_x.shape()[0] == 2);  // one per speaker
  CHECK(od.test_x.shape()[0] == 2);
}

TEST_CASE("run_probe: determinism, frozen checkpoint, id plumbing") {
  TmpDirs guard;
  fs::create_directories(kTmp);
  corpus::Corpus c = tiny_corpus();
  trainer::TrainConfig cfg = tiny_config();
  std::string ck = write_init_checkpoint(cfg, std::string(kTmp) + "/init.mgf");
  std::string sha_before = io::sha256_file(ck);

  ProbeTask task;
  task.kind = TaskKind::kFrameClass;
  task.seed = 11;
  ProbeResult a = run_probe(ck, c, task, std::string(kTmp) + "/cache");
  ProbeResult b = run_probe(ck, c, task, std::string(kTmp) + "/cache");
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.checkpoint_id == sha_before);
  CHECK(io::sha256_file(ck) == sha_before);
  CHECK(a.accuracy >= 0.0);
  CHECK(a.accuracy <= 1.0);
  REQUIRE(a.per_class.size() == 2);
}

TEST_CASE("more labeled data does not hurt an informative probe") {
  corpus::Corpus c = tiny_corpus(1.2, 21);
  // Hand-built representations carrying real class signal, so the label
  // budget is the only thing that changes between the two probes.
  RepSet reps;
  reps.checkpoint_id = "synthetic";
  Rng rng(77);
  for (const auto& u : c.utterances) {
    Array r({static_cast<int64_t>(u.frame_labels.size()), 8});
    for (int64_t f = 0; f < r.shape()[0]; ++f)
      for (int64_t j = 0; j < 8; ++j)
        r.at(f, j) = (j == u.frame_labels[static_cast<size_t>(f)] ? 1.0 : 0.0) +
                     rng.normal();
    reps.reps.push_back(std::move(r));
  }
  std::vector<double> lo, hi;
  for (uint64_t seed = 0; seed < 3; ++seed) {
    ProbeTask task;
    task.kind = TaskKind::kFrameClass;
    task.seed = seed;
    task.label_fraction = 0.05;
    lo.push_back(train_linear_probe(assemble(reps, c, task)).accuracy);
    task.label_fraction = 1.0;
    hi.push_back(train_linear_probe(assemble(reps, c, task)).accuracy);
  }
  std::sort(lo.begin(), lo.end());
  std::sort(hi.begin(), hi.end());
  CHECK(hi[1] >= lo[1]);
}

TEST_CASE("data-efficiency sweep: rows, consistency, budget bookkeeping") {
  TmpDirs guard;
  fs::create_directories(kTmp);
  corpus::Corpus c = tiny_corpus();
  trainer::TrainConfig cfg = tiny_config();
  std::string ck = write_init_checkpoint(cfg, std::string(kTmp) + "/init.mgf");
  std::string cache = std::string(kTmp) + "/cache";
  std::string csv_path = std::string(kTmp) + "/sweep.csv";

  SweepOptions opt;
  opt.fractions = {0.3, 1.0};
  opt.seed = 11;
  opt.finetune_epochs = 1;
  opt.finetune_batch = 4;
  std::vector<SweepRow> rows =
      data_efficiency_sweep(ck, c, opt, csv_path, cache);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].init == "pretrained");
  CHECK(rows[1].init == "scratch");
  CHECK(rows[0].fraction == 0.3);
  CHECK(rows[2].fraction == 1.0);
  CHECK(rows[0].train_frames < rows[2].train_frames);
  CHECK(rows[0].test_frames == rows[2].test_frames);
  for (const SweepRow& r : rows) {
    CHECK(r.probe_accuracy >= 0.0);
    CHECK(r.probe_accuracy <= 1.0);
    CHECK(r.finetune_accuracy >= 0.0);
    CHECK(r.finetune_accuracy <= 1.0);
  }

  ProbeTask task;
  task.kind = TaskKind::kFrameClass;
  task.seed = opt.seed;
  ProbeResult plain = run_probe(ck, c, task, cache);
  CHECK(rows[2].probe_accuracy == plain.accuracy);

  std::ifstream csv(csv_path);
  std::string line;
  std::getline(csv, line);
  CHECK(line == kSweepHeader);
  int data_rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) {
      ++data_rows;
      CHECK(line.substr(line.size() - 10) == ",synthetic");
    }
  CHECK(data_rows == 4);

  CHECK_THROWS_WITH_AS(
      data_efficiency_sweep(ck, c, SweepOptions{}, csv_path, cache),
      doctest::Contains("at least one fraction"), Error);
  SweepOptions bad;
  bad.fractions = {1.5};
  CHECK_THROWS_WITH_AS(data_efficiency_sweep(ck, c, bad, csv_path, cache),
                       doctest::Contains("fraction"), Error);
}

TEST_CASE("ablation suite: six rows, deltas, partial failure") {
  TmpDirs guard;
  fs::create_directories(kTmp);
  corpus::Corpus c = tiny_corpus();
  trainer::TrainConfig cfg = tiny_config();

  SUBCASE("all variants succeed") {
    std::string dir = std::string(kTmp) + "/ablate";
    std::vector<AblationRow> rows = ablation_suite(c, cfg, dir);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].variant == "full");
    CHECK(rows[0].status == "ok");
    CHECK(rows[0].frame_class_delta == 0.0);
    CHECK(rows[0].one_shot_delta == 0.0);
    std::vector<std::string> names = {"full",         "drop_sample",
                                      "drop_frame",   "drop_phoneme",
                                      "drop_sentence", "generative_phoneme"};
    for (size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].variant == names[i]);
      CHECK(rows[i].status == "ok");
      CHECK(rows[i].frame_class >= 0.0);
      CHECK(rows[i].frame_class <= 1.0);
      CHECK(std::abs(rows[i].frame_class_delta -
                     (rows[i].frame_class - rows[0].frame_class)) < 1e-15);
    }
    std::ifstream csv(dir + "/ablation.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == kAblationHeader);
    int n = 0;
    while (std::getline(csv, line))
      if (!line.empty()) ++n;
    CHECK(n == 6);
  }

  SUBCASE("a poisoned corpus fails only the variants that hit it") {
    corpus::Corpus poisoned = c;
    for (double& s : poisoned.utterances[0].wave.samples) s = 0.0;
    std::string dir = std::string(kTmp) + "/ablate_fail";
    std::vector<AblationRow> rows = ablation_suite(poisoned, cfg, dir);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].variant == "full");  // present even though it failed
    CHECK(rows[0].status.rfind("failed:", 0) == 0);
    CHECK(std::isnan(rows[0].frame_class));
    CHECK(rows[1].variant == "drop_sample");
    CHECK(rows[1].status == "ok");  // never reconstructs the silent crop
    CHECK(std::isnan(rows[1].frame_class_delta));
  }
}
