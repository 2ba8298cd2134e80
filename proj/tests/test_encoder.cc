// tests/test_encoder.cc

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "mgf/encoder.hpp"
#include "mgf/error.hpp"
#include "mgf/rng.hpp"

using namespace mgf;
using namespace mgf::encoder;
namespace ad = mgf::ad;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.stem_channels = 6;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.encoder_blocks = 1;
  cfg.decoder_blocks = 1;
  return cfg;
}

dsp::Waveform random_wave(int64_t n, uint64_t seed) {
  Rng rng(seed);
  dsp::Waveform w;
  w.samples.resize(static_cast<size_t>(n));
  for (auto& s : w.samples) s = rng.uniform(-0.5, 0.5);
  return w;
}

}  // namespace

TEST_CASE("config validation") {
  EncoderConfig cfg;
  cfg.d_model = 10;
  cfg.heads = 4;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.heads = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = EncoderConfig{};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("feature head dimensions") {
  CHECK(target_dim(TargetKind::kLps25) == 257);
  CHECK(target_dim(TargetKind::kLps400) == 4097);
  CHECK(target_dim(TargetKind::kMfcc25) == 13);
  CHECK(target_dim(TargetKind::kMfcc400) == 13);
  CHECK(std::string(target_kind_name(TargetKind::kLps400)) == "lps400");
}

TEST_CASE("initialization is seed-deterministic and name-keyed") {
  Model a = init_model(tiny_config(), 42);
  Model b = init_model(tiny_config(), 42);
  REQUIRE(a.params.size() == b.params.size());
  for (const auto& [name, t] : a.params) {
    const auto& other = b.p(name);
    REQUIRE(t->value.same_shape(other->value));
    for (int64_t i = 0; i < t->value.numel(); ++i)
      CHECK(t->value.at(i) == other->value.at(i));
  }
  Model c = init_model(tiny_config(), 43);
  bool different = false;
  for (const auto& [name, t] : a.params)
    for (int64_t i = 0; i < t->value.numel(); ++i)
      if (t->value.at(i) != c.p(name)->value.at(i)) different = true;
  CHECK(different);
  CHECK(param_count(a) > 0);
}

TEST_CASE("stem maps 2 s of audio to 200 frames") {
  Model m = init_model(tiny_config(), 1);
  auto out = stem_forward(waveform_input(random_wave(32000, 2)), m);
  CHECK(out->value.dim(0) == 200);
  CHECK(out->value.dim(1) == 6);
  auto half = stem_forward(waveform_input(random_wave(16000, 2)), m);
  CHECK(half->value.dim(0) == 100);
}

TEST_CASE("zero waveform gives a time-constant stem output") {
  Model m = init_model(tiny_config(), 3);
  dsp::Waveform zero;
  zero.samples.assign(1600, 0.0);
  auto out = stem_forward(waveform_input(zero), m);
  for (int64_t t = 1; t < out->value.dim(0); ++t)
    for (int64_t c = 0; c < out->value.dim(1); ++c)
      CHECK(out->value.at(t, c) == out->value.at(0, c));
}

TEST_CASE("encode keeps the frame grid and model width") {
  Model m = init_model(tiny_config(), 4);
  auto rep = encode(stem_forward(waveform_input(random_wave(32000, 5)), m), m);
  CHECK(rep->value.dim(0) == 200);  // 2 s at 100 frames/s
  CHECK(rep->value.dim(1) == 8);
}

TEST_CASE("zeroed block weights reduce encode to the positional residual") {
  Model m = init_model(tiny_config(), 6);
  for (auto& [name, t] : m.params) {
    if (name.find("enc") == 0 &&
        (name.find(".attn.") != std::string::npos ||
         name.find(".ff.") != std::string::npos))
      t->value = Array(t->value.shape());
  }
  auto stem_out = stem_forward(waveform_input(random_wave(3200, 7)), m);
  auto rep = encode(stem_out, m);
  auto aligned = ad::add_rowvec(ad::matmul(stem_out, m.p("align.w")),
                                m.p("align.b"));
  Array pos = positional_encoding(aligned->value.dim(0), 8);
  for (int64_t t = 0; t < rep->value.dim(0); ++t)
    for (int64_t c = 0; c < 8; ++c)
      CHECK(rep->value.at(t, c) == aligned->value.at(t, c) + pos.at(t, c));
}

TEST_CASE("decoder reconstructs the crop length") {
  Model m = init_model(tiny_config(), 8);
  auto rep = encode(stem_forward(waveform_input(random_wave(32000, 9)), m), m);
  auto wave = decode_waveform(rep, m);
  CHECK(wave->value.dim(0) == 32000);
  CHECK(wave->value.dim(1) == 1);
  for (int64_t i = 0; i < wave->value.numel(); ++i)
    CHECK(std::isfinite(wave->value.at(i)));
}

TEST_CASE("feature heads emit their kind's dimension and share nothing") {
  Model m = init_model(tiny_config(), 10);
  auto rep = encode(stem_forward(waveform_input(random_wave(3200, 11)), m), m);
  for (TargetKind kind : kAllTargetKinds) {
    auto out = head_frame_features(rep, kind, m);
    CHECK(out->value.dim(0) == rep->value.dim(0));
    CHECK(out->value.dim(1) == target_dim(kind));
  }
  // A loss through one head moves no other head's parameters.
  zero_grads(m);
  auto out = head_frame_features(rep, TargetKind::kMfcc25, m);
  ad::backward(ad::mean_all(ad::mul(out, out)));
  CHECK(m.p("head.mfcc25.conv1.w")->has_grad);
  CHECK_FALSE(m.p("head.lps25.conv1.w")->has_grad);
  CHECK_FALSE(m.p("head.lps400.conv2.w")->has_grad);
  CHECK_FALSE(m.p("head.mfcc400.conv1.b")->has_grad);
}

TEST_CASE("sentence head is unit-norm and pooling-invariant") {
  Model m = init_model(tiny_config(), 12);
  Rng rng(13);
  Array rep_value = Array::random_normal({40, 8}, 1.0, rng);
  auto z = head_sentence(ad::constant(rep_value), m);
  CHECK(z->value.dim(0) == 1);
  CHECK(z->value.dim(1) == 8);
  double norm = 0.0;
  for (int64_t i = 0; i < 8; ++i) norm += z->value.at(i) * z->value.at(i);
  CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);

  // Reversing the frame order leaves the mean pool unchanged.
  Array reversed({40, 8});
  for (int64_t t = 0; t < 40; ++t)
    for (int64_t c = 0; c < 8; ++c)
      reversed.at(t, c) = rep_value.at(39 - t, c);
  auto z2 = head_sentence(ad::constant(reversed), m);
  for (int64_t i = 0; i < 8; ++i)
    CHECK(std::abs(z->value.at(i) - z2->value.at(i)) < 1e-12);

  // Constant rows pool to the row itself.
  Array row({1, 8});
  for (int64_t i = 0; i < 8; ++i) row.at(0, i) = 0.1 * static_cast<double>(i);
  Array tiled({5, 8});
  for (int64_t t = 0; t < 5; ++t)
    for (int64_t i = 0; i < 8; ++i) tiled.at(t, i) = row.at(0, i);
  auto za = head_sentence(ad::constant(row), m);
  auto zb = head_sentence(ad::constant(tiled), m);
  for (int64_t i = 0; i < 8; ++i)
    CHECK(std::abs(za->value.at(i) - zb->value.at(i)) < 1e-12);
}

TEST_CASE("positional encoding basics") {
  Array pe = positional_encoding(50, 8);
  for (int64_t i = 0; i < 8; i += 2) CHECK(pe.at(0, i) == 0.0);
  for (int64_t i = 1; i < 8; i += 2) CHECK(pe.at(0, i) == 1.0);
  for (int64_t i = 0; i < pe.numel(); ++i) {
    CHECK(pe.at(i) >= -1.0);
    CHECK(pe.at(i) <= 1.0);
  }
}

TEST_CASE("whole network passes a finite-difference sweep") {
  Model m = init_model(tiny_config(), 20);
  dsp::Waveform wave = random_wave(800, 21);

  std::vector<std::string> names;
  for (const auto& [name, t] : m.params) names.push_back(name);

  auto forward = [&]() -> ad::Tensor {
    auto stem_out = stem_forward(waveform_input(wave), m);
    auto rep = encode(stem_out, m);
    auto recon = decode_waveform(rep, m);
    auto loss = ad::mean_all(ad::mul(recon, recon));
    for (TargetKind kind : kAllTargetKinds) {
      auto pred = head_frame_features(rep, kind, m);
      loss = ad::add(loss, ad::mean_all(ad::mul(pred, pred)));
    }
    auto z = head_sentence(rep, m);
    return ad::add(loss, ad::mean_all(ad::gelu(z)));
  };

  zero_grads(m);
  ad::backward(forward());
  std::vector<Array> params, analytic;
  for (const auto& name : names) {
    params.push_back(m.p(name)->value);
    REQUIRE(m.p(name)->has_grad);
    analytic.push_back(m.p(name)->grad);
  }

  auto f = [&](const std::vector<Array>& ps) {
    for (size_t i = 0; i < names.size(); ++i)
      m.params[names[i]]->value = ps[i];
    return forward()->value.at(0);
  };
  ad::FdOptions opt;
  opt.max_coords_per_param = 3;
  opt.seed = 22;
  ad::FdReport rep = ad::finite_diff_check(f, params, analytic, opt);
  for (size_t i = 0; i < names.size(); ++i)
    m.params[names[i]]->value = params[i];

  CHECK(rep.checked > 100);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("clean representation helper matches the graph path") {
  Model m = init_model(tiny_config(), 30);
  dsp::Waveform wave = random_wave(1600, 31);
  Array a = representation_of(wave, m);
  Array b = encode(stem_forward(waveform_input(wave), m), m)->value;
  REQUIRE(a.same_shape(b));
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}
