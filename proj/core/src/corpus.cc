// core/src/corpus.cc

#include "mgf/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "mgf/error.hpp"
#include "mgf/parallel.hpp"
#include "mgf/rng.hpp"

namespace mgf::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNoiseRms = 0.1;  // -20 dB re full scale

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

std::vector<int> read_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open labels file " + path);
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t pos = 0;
    int v = std::stoi(line, &pos);
    if (pos != line.size())
      throw Error("labels file " + path + ": bad line '" + line + "'");
    labels.push_back(v);
  }
  return labels;
}

}  // namespace

dsp::Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open wav " + path);
  char tag[5] = {0};
  in.read(tag, 4);
  uint32_t riff_size = read_u32(in);
  (void)riff_size;
  char wave[5] = {0};
  in.read(wave, 4);
  if (!in || std::strcmp(tag, "RIFF") != 0 || std::strcmp(wave, "WAVE") != 0)
    throw Error("not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  dsp::Waveform out;
  while (in) {
    char chunk[5] = {0};
    in.read(chunk, 4);
    if (!in) break;
    uint32_t size = read_u32(in);
    if (!in) throw Error("malformed wav header: " + path);
    if (std::strcmp(chunk, "fmt ") == 0) {
      if (size < 16) throw Error("malformed wav header: " + path);
      format = read_u16(in);
      channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      in.ignore(size - 16);
      have_fmt = true;
    } else if (std::strcmp(chunk, "data") == 0) {
      if (!have_fmt) throw Error("malformed wav header: " + path);
      if (format != 1 || bits != 16)
        throw Error("unsupported wav encoding (need PCM16): " + path);
      if (channels != 1) throw Error("unsupported channel count: " + path);
      uint32_t n = size / 2;
      out.samples.resize(n);
      std::vector<char> raw(size);
      in.read(raw.data(), size);
      if (!in) throw Error("malformed wav header: " + path);
      for (uint32_t i = 0; i < n; ++i) {
        int16_t s = static_cast<int16_t>(
            static_cast<unsigned char>(raw[2 * i]) |
            (static_cast<unsigned char>(raw[2 * i + 1]) << 8));
        out.samples[i] = static_cast<double>(s) / 32768.0;
      }
      out.sample_rate = static_cast<int>(sample_rate);
      return out;
    } else {
      in.ignore(size + (size & 1));
    }
  }
  throw Error("malformed wav header: " + path);
}

void write_wav(const std::string& path, const dsp::Waveform& wave) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write wav " + path);
  uint32_t data_size = static_cast<uint32_t>(wave.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(wave.sample_rate));
  write_u32(out, static_cast<uint32_t>(wave.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_size);
  for (double x : wave.samples) {
    double scaled = std::round(x * 32768.0);
    int16_t s = static_cast<int16_t>(
        std::clamp(scaled, -32768.0, 32767.0));
    write_u16(out, static_cast<uint16_t>(s));
  }
  if (!out) throw Error("cannot write wav " + path);
}

Corpus load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path);
  fs::path base = fs::path(path).parent_path();

  struct Record {
    std::string id, wav_path, labels_path;
    int speaker_id = 0;
  };
  std::vector<Record> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("manifest " + path + " line " + std::to_string(line_no) +
                  ": " + e.what());
    }
    Record r;
    if (!j.contains("id") || !j.contains("wav_path") ||
        !j.contains("speaker_id"))
      throw Error("manifest " + path + " line " + std::to_string(line_no) +
                  ": need id, wav_path, speaker_id");
    r.id = j["id"].get<std::string>();
    r.wav_path = (base / j["wav_path"].get<std::string>()).string();
    r.speaker_id = j["speaker_id"].get<int>();
    if (j.contains("labels_path"))
      r.labels_path = (base / j["labels_path"].get<std::string>()).string();
    records.push_back(std::move(r));
  }
  if (records.empty()) throw Error("empty corpus");

  Corpus corpus;
  corpus.utterances.resize(records.size());
  parallel_for(static_cast<int64_t>(records.size()), [&](int64_t i) {
    const Record& r = records[static_cast<size_t>(i)];
    Utterance& u = corpus.utterances[static_cast<size_t>(i)];
    u.id = r.id;
    u.speaker_id = r.speaker_id;
    try {
      u.wave = read_wav(r.wav_path);
      if (!r.labels_path.empty()) {
        u.frame_labels = read_labels_csv(r.labels_path);
        int64_t expect = dsp::frame_count_10ms(u.wave.size());
        if (static_cast<int64_t>(u.frame_labels.size()) != expect)
          throw Error(std::to_string(u.frame_labels.size()) + " labels for " +
                      std::to_string(expect) + " frames");
      }
    } catch (const Error& e) {
      throw Error("utterance " + r.id + ": " + e.what());
    }
  });

  for (const Utterance& u : corpus.utterances) {
    corpus.speaker_count = std::max(corpus.speaker_count, u.speaker_id + 1);
    for (int c : u.frame_labels)
      corpus.class_count = std::max(corpus.class_count, c + 1);
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "wav");
  bool any_labels = false;
  for (const auto& u : corpus.utterances)
    if (u.has_labels()) any_labels = true;
  if (any_labels) fs::create_directories(fs::path(dir) / "labels");

  std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw Error("cannot write manifest in " + dir);
  for (const auto& u : corpus.utterances) {
    std::string wav_rel = "wav/" + u.id + ".wav";
    write_wav((fs::path(dir) / wav_rel).string(), u.wave);
    json j;
    j["id"] = u.id;
    j["wav_path"] = wav_rel;
    j["speaker_id"] = u.speaker_id;
    if (u.has_labels()) {
      std::string labels_rel = "labels/" + u.id + ".csv";
      std::ofstream lab(fs::path(dir) / labels_rel);
      for (int c : u.frame_labels) lab << c << "\n";
      j["labels_path"] = labels_rel;
    }
    manifest << j.dump() << "\n";
  }
}

std::vector<double> class_formants(int class_id, int class_count) {
  const double base[3] = {400.0, 1300.0, 2600.0};
  int c = class_id, n = class_count;
  int perm[3] = {c, (3 * c + 1) % n, (5 * c + 2) % n};
  std::vector<double> f(3);
  for (int k = 0; k < 3; ++k)
    f[static_cast<size_t>(k)] = base[k] * (1.0 + 0.06 * perm[k]);
  return f;
}

Corpus synth_corpus(const SynthSpec& spec) {
  if (spec.class_count < 1 || spec.speaker_count < 1 ||
      spec.utterances_per_speaker < 1)
    throw Error("synth spec counts must be at least 1");
  int64_t target = static_cast<int64_t>(
      std::llround(spec.utterance_seconds * dsp::kDefaultSampleRate));
  if (target < dsp::kFrameHop)
    throw Error("utterance too short for the 10 ms frame grid");

  const double amps[3] = {1.0, 0.6, 0.35};
  const int64_t fade = 80;  // 5 ms edge ramps against clicks

  Corpus corpus;
  corpus.class_count = spec.class_count;
  corpus.speaker_count = spec.speaker_count;
  corpus.utterances.resize(static_cast<size_t>(spec.speaker_count) *
                           static_cast<size_t>(spec.utterances_per_speaker));

  parallel_for(static_cast<int64_t>(corpus.utterances.size()), [&](int64_t i) {
    int s = static_cast<int>(i) / spec.utterances_per_speaker;
    int uidx = static_cast<int>(i) % spec.utterances_per_speaker;
    double pitch = 1.0, tilt = 0.0;
    if (spec.speaker_count > 1) {
      double frac = static_cast<double>(s) / (spec.speaker_count - 1);
      pitch = 0.88 + 0.24 * frac;
      tilt = -0.5 + 1.0 * frac;
    }

    Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(s),
                        static_cast<uint64_t>(uidx)));
    std::vector<double> samples;
    std::vector<int> sample_class;
    samples.reserve(static_cast<size_t>(target) + 4800);
    while (static_cast<int64_t>(samples.size()) < target) {
      int c = static_cast<int>(rng.uniform_int(
          static_cast<uint64_t>(spec.class_count)));
      int64_t seg_len =
          800 + static_cast<int64_t>(rng.uniform_int(4001));  // 50-300 ms
      std::vector<double> freqs = class_formants(c, spec.class_count);
      double phase[3], amp[3];
      for (int k = 0; k < 3; ++k) {
        freqs[static_cast<size_t>(k)] *= pitch;
        phase[k] = rng.uniform(0.0, 2.0 * M_PI);
        amp[k] = amps[k] * std::pow(freqs[static_cast<size_t>(k)] / 1000.0, tilt);
      }
      for (int64_t t = 0; t < seg_len; ++t) {
        double x = 0.0;
        for (int k = 0; k < 3; ++k)
          x += amp[k] * std::sin(2.0 * M_PI * freqs[static_cast<size_t>(k)] *
                                     static_cast<double>(t) /
                                     dsp::kDefaultSampleRate +
                                 phase[k]);
        double ramp = 1.0;
        if (t < fade) ramp = static_cast<double>(t) / fade;
        int64_t tail = seg_len - 1 - t;
        if (tail < fade)
          ramp = std::min(ramp, static_cast<double>(tail) / fade);
        samples.push_back(x * ramp);
        sample_class.push_back(c);
      }
    }
    samples.resize(static_cast<size_t>(target));
    sample_class.resize(static_cast<size_t>(target));

    double peak = 0.0;
    for (double x : samples) peak = std::max(peak, std::abs(x));
    if (peak > 0.0)
      for (double& x : samples) x *= 0.5 / peak;

    Utterance& utt = corpus.utterances[static_cast<size_t>(i)];
    utt.id = "spk" + std::to_string(s) + "_utt" + std::to_string(uidx);
    utt.speaker_id = s;
    utt.wave.samples = std::move(samples);
    utt.wave.sample_rate = dsp::kDefaultSampleRate;

    int64_t n_frames = dsp::frame_count_10ms(target);
    utt.frame_labels.resize(static_cast<size_t>(n_frames));
    for (int64_t f = 0; f < n_frames; ++f) {
      // Majority class over the frame's 160-sample tile; ties go to the
      // class seen earliest in the tile.
      std::map<int, int64_t> counts;
      std::map<int, int64_t> first_pos;
      int64_t start = f * dsp::kFrameHop;
      int64_t end = std::min<int64_t>(start + dsp::kFrameHop, target);
      for (int64_t t = start; t < end; ++t) {
        int c = sample_class[static_cast<size_t>(t)];
        if (!counts.count(c)) first_pos[c] = t;
        ++counts[c];
      }
      int best = -1;
      int64_t best_count = -1, best_first = 0;
      for (const auto& [c, n] : counts) {
        if (n > best_count ||
            (n == best_count && first_pos[c] < best_first)) {
          best = c;
          best_count = n;
          best_first = first_pos[c];
        }
      }
      utt.frame_labels[static_cast<size_t>(f)] = best;
    }
  });
  return corpus;
}

dsp::Waveform noise_sample(const NoiseBank& bank, int64_t length,
                           uint64_t seed) {
  dsp::Waveform out;
  out.samples.resize(static_cast<size_t>(length));
  Rng rng(derive_seed(seed, "noise"));
  if (bank.clips.empty()) {
    if (!bank.synthetic) throw Error("no noise available");
    for (auto& x : out.samples) x = kNoiseRms * rng.normal();
    return out;
  }
  const dsp::Waveform& clip = bank.clips[static_cast<size_t>(
      rng.uniform_int(bank.clips.size()))];
  if (clip.samples.empty()) throw Error("no noise available");
  int64_t offset = static_cast<int64_t>(
      rng.uniform_int(static_cast<uint64_t>(clip.size())));
  for (int64_t i = 0; i < length; ++i)
    out.samples[static_cast<size_t>(i)] =
        clip.samples[static_cast<size_t>((offset + i) % clip.size())];
  out.sample_rate = clip.sample_rate;
  return out;
}

}  // namespace mgf::corpus
