// Copyright 2026 The stylevc Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cstring>
#include <fstream>

#include "doctest_torch.hpp"
#include "stylevc/audio.hpp"
#include "stylevc/errors.hpp"
#include "stylevc/features.hpp"
#include "stylevc/frontend.hpp"
#include "test_support.hpp"

using namespace stylevc;
using testing::TempDir;

namespace {

// Minimal WAV writer independent of the library: 16-bit PCM or 32-bit float.
void write_raw_wav(const std::string& path, const std::vector<std::vector<float>>& channels, int sr,
                   bool as_float) {
  const std::uint16_t nch = static_cast<std::uint16_t>(channels.size());
  const std::uint32_t frames = channels.empty() ? 0 : static_cast<std::uint32_t>(channels[0].size());
  const std::uint16_t bits = as_float ? 32 : 16;
  const std::uint32_t data_bytes = frames * nch * bits / 8;
  std::ofstream f(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
  f.write("RIFF", 4);
  u32(36 + data_bytes);
  f.write("WAVEfmt ", 8);
  u32(16);
  u16(as_float ? 3 : 1);
  u16(nch);
  u32(sr);
  u32(sr * nch * bits / 8);
  u16(nch * bits / 8);
  u16(bits);
  f.write("data", 4);
  u32(data_bytes);
  for (std::uint32_t i = 0; i < frames; ++i)
    for (const auto& ch : channels) {
      if (as_float) {
        f.write(reinterpret_cast<const char*>(&ch[i]), 4);
      } else {
        const auto v = static_cast<std::int16_t>(std::lround(std::clamp(ch[i], -1.0f, 1.0f) * 32767.0));
        f.write(reinterpret_cast<const char*>(&v), 2);
      }
    }
}

FeatureBundle synthetic_bundle(std::int64_t frames, int dim) {
  FeatureBundle b;
  b.utt_id = "u";
  b.audio = torch::arange(frames * 320, torch::kFloat32);
  b.spec.values = torch::arange(641 * frames, torch::kFloat32).reshape({641, frames});
  b.mel.values = torch::arange(80 * frames, torch::kFloat32).reshape({80, frames});
  b.content.values = torch::arange(frames * dim, torch::kFloat32).reshape({frames, dim});
  b.content_pert.values = b.content.values + 1.0;
  b.pitch.log_f0 = torch::arange(frames * 4, torch::kFloat32);
  b.pitch.voiced = torch::ones({frames * 4}, torch::kBool);
  return b;
}

}  // namespace

TEST_SUITE("audio_frontend") {
  TEST_CASE("16 kHz mono float file passes through bit-exactly") {
    TempDir dir;
    const auto w = testing::white_noise(0.5, 1, 0.2);
    write_raw_wav(dir.file("a.wav"), {w.samples}, 16000, true);
    const auto r = load_and_resample(dir.file("a.wav"), 16000);
    CHECK(r.sample_rate == 16000);
    REQUIRE(r.size() == w.size());
    CHECK(std::memcmp(r.samples.data(), w.samples.data(), w.size() * sizeof(float)) == 0);
  }

  TEST_CASE("48 kHz stereo is averaged to mono and resampled by 1/3") {
    TempDir dir;
    const auto left = testing::sine(440.0, 1.0, 0.4, 48000);
    auto right = left;
    for (auto& s : right.samples) s *= 0.5f;
    write_raw_wav(dir.file("s.wav"), {left.samples, right.samples}, 48000, false);
    const auto info = probe_wav(dir.file("s.wav"));
    CHECK(info.channels == 2);
    CHECK(info.sample_rate == 48000);
    const auto r = load_and_resample(dir.file("s.wav"), 16000);
    CHECK(r.sample_rate == 16000);
    CHECK(r.size() == 16000);
    // Mean of the channels is a 440 Hz sine at amplitude 0.3, RMS 0.3/sqrt(2).
    std::vector<float> mid(r.samples.begin() + 1000, r.samples.end() - 1000);
    CHECK(testing::rms(mid) == doctest::Approx(0.3 / std::sqrt(2.0)).epsilon(0.01));
  }

  TEST_CASE("PCM16 write and read round trip") {
    TempDir dir;
    const auto w = testing::sine(300.0, 0.2);
    write_wav(dir.file("p.wav"), w);
    const auto r = read_wav(dir.file("p.wav"));
    REQUIRE(r.size() == w.size());
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(r.samples[i] - w.samples[i]) <= 1.0f / 32767);
  }

  TEST_CASE("empty and unreadable files") {
    TempDir dir;
    write_raw_wav(dir.file("empty.wav"), {std::vector<float>{}}, 16000, false);
    CHECK_THROWS_AS(load_and_resample(dir.file("empty.wav"), 16000), ValidationError);
    CHECK_THROWS_AS(load_and_resample(dir.file("missing.wav"), 16000), IoError);
    std::ofstream(dir.file("junk.wav")) << "not audio at all";
    CHECK_THROWS_AS(load_and_resample(dir.file("junk.wav"), 16000), IoError);
  }

  TEST_CASE("resampling preserves a tone's frequency and level") {
    const auto w = testing::sine(1000.0, 1.0, 0.5, 22050);
    const auto r = resample(w, 16000);
    CHECK(r.size() == 16000);
    const auto expect = testing::sine(1000.0, 1.0, 0.5, 16000);
    double err = 0.0;
    for (std::size_t i = 200; i < 15800; ++i) err = std::max(err, double(std::abs(r.samples[i] - expect.samples[i])));
    CHECK(err < 5e-3);
  }

  TEST_CASE("linear spectrogram shapes") {
    Frontend fe(FrontendConfig{});
    auto s1 = fe.linear_spectrogram(testing::white_noise(61440.0 / 16000, 2));
    CHECK(s1.bins() == 641);
    CHECK(s1.frames() == 192);
    auto s2 = fe.linear_spectrogram(testing::white_noise(9600.0 / 16000, 3));
    CHECK(s2.bins() == 641);
    CHECK(s2.frames() == 30);
    CHECK((s1.values >= 0).all().item<bool>());
  }

  TEST_CASE("silence gives zero magnitudes and the log floor") {
    Frontend fe(FrontendConfig{});
    Waveform z;
    z.samples.assign(9600, 0.0f);
    CHECK(fe.linear_spectrogram(z).values.abs().max().item<float>() == 0.0f);
    auto mel = fe.mel_spectrogram(z);
    CHECK(mel.n_mels() == 80);
    CHECK(torch::allclose(mel.values, torch::full_like(mel.values, std::log(1e-5f))));
  }

  TEST_CASE("too-short input is rejected") {
    Frontend fe(FrontendConfig{});
    Waveform w;
    w.samples.assign(1000, 0.1f);
    CHECK_THROWS_AS(fe.linear_spectrogram(w), ValidationError);
    CHECK_THROWS_AS(fe.mel_spectrogram(w), ValidationError);
    w.samples.assign(400, 0.1f);
    CHECK_THROWS_AS(fe.extract_f0(w), ValidationError);
  }

  TEST_CASE("magnitude matches a naive DFT") {
    const FrontendConfig cfg;
    Frontend fe(cfg);
    const auto w = testing::white_noise(3200.0 / 16000, 4);
    const auto got = fe.linear_spectrogram(w).values.to(torch::kFloat64);
    const auto ref = testing::brute_spectrogram(w.samples, cfg.n_fft, cfg.hop);
    REQUIRE(static_cast<std::int64_t>(ref.size()) == got.size(1));
    double max_err = 0.0, max_ref = 0.0;
    for (std::size_t t = 0; t < ref.size(); ++t)
      for (std::size_t k = 0; k < ref[t].size(); ++k) {
        max_err = std::max(max_err, std::abs(got[k][t].item<double>() - ref[t][k]));
        max_ref = std::max(max_ref, ref[t][k]);
      }
    CHECK(max_err / max_ref < 1e-5);
  }

  TEST_CASE("spectrogram magnitude scales linearly") {
    Frontend fe(FrontendConfig{});
    auto w = testing::white_noise(0.6, 5, 0.1);
    auto scaled = w;
    for (auto& s : scaled.samples) s *= 3.0f;
    auto a = fe.linear_spectrogram(w).values;
    auto b = fe.linear_spectrogram(scaled).values;
    CHECK(torch::allclose(b, 3.0 * a, 1e-4, 1e-5));
  }

  TEST_CASE("mel filterbank matches an independent slaney construction") {
    const FrontendConfig cfg;
    const auto fb = slaney_mel_filterbank(cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax)
                        .to(torch::kFloat64);
    const auto ref = testing::brute_mel_filterbank(cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax);
    REQUIRE(fb.size(0) == 80);
    REQUIRE(fb.size(1) == 641);
    double err = 0.0;
    for (int m = 0; m < 80; ++m)
      for (int k = 0; k < 641; ++k) err = std::max(err, std::abs(fb[m][k].item<double>() - ref[m][k]));
    CHECK(err < 1e-7);
  }

  TEST_CASE("log-mel matches the brute-force pipeline") {
    const FrontendConfig cfg;
    Frontend fe(cfg);
    const auto w = testing::sawtooth(180.0, 3200.0 / 16000);
    const auto got = fe.mel_spectrogram(w).values.to(torch::kFloat64);
    const auto ref = testing::brute_log_mel(w.samples, cfg);
    double err = 0.0;
    for (int m = 0; m < cfg.n_mels; ++m)
      for (std::size_t t = 0; t < ref[m].size(); ++t)
        err = std::max(err, std::abs(got[m][t].item<double>() - ref[m][t]));
    CHECK(err < 1e-3);
  }

  TEST_CASE("mel shape and determinism") {
    Frontend fe(FrontendConfig{});
    const auto w = testing::white_noise(61440.0 / 16000, 6);
    const auto a = fe.mel_spectrogram(w), b = fe.mel_spectrogram(w);
    CHECK(a.n_mels() == 80);
    CHECK(a.frames() == 192);
    CHECK(torch::equal(a.values, b.values));
    CHECK(a.frames() == fe.linear_spectrogram(w).frames());
  }

  TEST_CASE("F0 of a 220 Hz sine") {
    Frontend fe(FrontendConfig{});
    const auto p = fe.extract_f0(testing::sine(220.0, 1.0));
    CHECK(p.frames() == 200);
    CHECK(p.voiced.all().item<bool>());
    const auto hz = torch::exp(p.log_f0.to(torch::kFloat64));
    CHECK(((hz - 220.0).abs() / 220.0).max().item<double>() < 0.03);
  }

  TEST_CASE("F0 of sawtooth signals") {
    Frontend fe(FrontendConfig{});
    for (double f : {110.0, 220.0, 440.0}) {
      CAPTURE(f);
      const auto p = fe.extract_f0(testing::sawtooth(f, 1.0));
      auto voiced = p.log_f0.masked_select(p.voiced).to(torch::kFloat64);
      REQUIRE(voiced.numel() > 100);
      const double median = std::exp(voiced.median().item<double>());
      CHECK(std::abs(median - f) / f < 0.03);
    }
  }

  TEST_CASE("white noise is mostly unvoiced") {
    Frontend fe(FrontendConfig{});
    const auto p = fe.extract_f0(testing::white_noise(1.0, 7));
    CHECK(p.voiced.to(torch::kFloat64).mean().item<double>() < 0.5);
  }

  TEST_CASE("pitch track contract") {
    Frontend fe(FrontendConfig{});
    auto w = testing::sawtooth(150.0, 61440.0 / 16000);
    for (std::size_t i = 20000; i < 30000; ++i) w.samples[i] = 0.0f;
    const auto p = fe.extract_f0(w);
    CHECK(p.frames() == 768);
    auto unvoiced = p.log_f0.masked_select(p.voiced.logical_not());
    REQUIRE(unvoiced.numel() > 0);
    CHECK((unvoiced == 0).all().item<bool>());
    auto voiced = p.log_f0.masked_select(p.voiced);
    CHECK((voiced >= std::log(50.0f) - 1e-5).all().item<bool>());
    CHECK((voiced <= std::log(600.0f) + 1e-5).all().item<bool>());
  }

  TEST_CASE("slice_aligned keeps every stream on the frame grid") {
    const auto b = synthetic_bundle(192, 8);
    CHECK_NOTHROW(check_alignment(b, 320, 4));
    const auto s = slice_aligned(b, 17, 30, 320, 4);
    CHECK(s.audio.numel() == 9600);
    CHECK(s.pitch.frames() == 120);
    CHECK(s.spec.frames() == 30);
    CHECK(s.mel.frames() == 30);
    CHECK(s.content.frames() == 30);
    CHECK(s.audio[0].item<float>() == 17 * 320);
    CHECK(s.pitch.log_f0[0].item<float>() == 17 * 4);
    CHECK(s.spec.values[0][0].item<float>() == 17);
    CHECK(s.content.values[0][0].item<float>() == 17 * 8);
    CHECK_NOTHROW(check_alignment(s, 320, 4));

    const auto full = slice_aligned(b, 0, 192, 320, 4);
    CHECK(torch::equal(full.audio, b.audio));
    CHECK(torch::equal(full.spec.values, b.spec.values));
    CHECK(torch::equal(full.pitch.log_f0, b.pitch.log_f0));

    CHECK_THROWS_AS(slice_aligned(b, 180, 30, 320, 4), ValidationError);
    CHECK_THROWS_AS(slice_aligned(b, -1, 3, 320, 4), ValidationError);
  }

  TEST_CASE("alignment invariants on real features") {
    Frontend fe(FrontendConfig{});
    for (int len : {1280, 4000, 9600, 12345}) {
      CAPTURE(len);
      auto w = testing::white_noise(len / 16000.0, len);
      w.samples.resize(len);
      const auto spec = fe.linear_spectrogram(w);
      CHECK(spec.frames() == len / 320);
      CHECK(fe.mel_spectrogram(w).frames() == spec.frames());
      CHECK(fe.extract_f0(w).frames() == len / 80);
    }
  }
}
