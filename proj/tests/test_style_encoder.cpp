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

#include "doctest_torch.hpp"
#include "stylevc/errors.hpp"
#include "stylevc/style_encoder.hpp"
#include "test_support.hpp"

using namespace stylevc;

namespace {

StyleConfig small(const std::string& pooling) {
  StyleConfig c;
  c.style_dim = 6;
  c.hidden = 8;
  c.heads = 2;
  c.pooling = pooling;
  return c;
}

MelSpectrogram random_mel(std::int64_t frames, std::uint64_t seed, int n_mels = 80) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return {torch::randn({n_mels, frames}, gen, torch::kFloat32)};
}

}  // namespace

TEST_SUITE("style_encoder") {
  TEST_CASE("frame permutation leaves the style unchanged") {
    for (const char* pooling : {"mean", "attentive"}) {
      CAPTURE(pooling);
      torch::manual_seed(1);
      StyleEncoder enc(small(pooling), 80);
      enc->to(torch::kFloat64);
      auto mel = random_mel(40, 2);
      mel.values = mel.values.to(torch::kFloat64);
      const auto perm = torch::randperm(40, torch::kLong);
      const MelSpectrogram shuffled{mel.values.index_select(1, perm)};
      torch::NoGradGuard g;
      const auto a = enc->encode(mel).values, b = enc->encode(shuffled).values;
      if (std::string(pooling) == "mean")
        CHECK((a - b).abs().max().item<double>() < 1e-12);
      else
        CHECK((a - b).abs().max().item<double>() < 1e-10);
    }
  }

  TEST_CASE("batch shape and masking") {
    torch::manual_seed(3);
    StyleEncoder enc(small("attentive"), 80);
    torch::NoGradGuard g;
    const auto m1 = random_mel(30, 4).values, m2 = random_mel(50, 5).values;
    auto batch = torch::zeros({2, 80, 50});
    batch[0].narrow(1, 0, 30).copy_(m1);
    batch[1].copy_(m2);
    auto mask = torch::zeros({2, 1, 50});
    mask[0].narrow(1, 0, 30).fill_(1.0);
    mask[1].fill_(1.0);
    // Garbage in the padded region must not leak into the style.
    batch[0].narrow(1, 30, 20).fill_(100.0);
    const auto out = enc->forward(batch, mask);
    CHECK(out.sizes() == torch::IntArrayRef({2, 6}));
    CHECK(torch::allclose(out[0], enc->encode({m1}).values, 1e-5, 1e-5));
    CHECK(torch::allclose(out[1], enc->encode({m2}).values, 1e-5, 1e-5));
  }

  TEST_CASE("too few frames") {
    StyleEncoder enc(small("attentive"), 80);
    CHECK_THROWS_AS(enc->encode(random_mel(7, 1)), ValidationError);
    CHECK_NOTHROW(enc->encode(random_mel(8, 1)));
    CHECK_THROWS_AS(enc->encode({torch::zeros({80})}), ValidationError);
  }

  TEST_CASE("null embedding contract") {
    StyleEncoder enc(small("attentive"), 80);
    const auto a = enc->null_embedding(), b = enc->null_embedding();
    CHECK(a.origin == StyleVector::Origin::kNull);
    CHECK(torch::equal(a.values, b.values));
    CHECK(a.values.data_ptr() == b.values.data_ptr());
    CHECK(a.values.numel() == enc->style_dim());
    CHECK(enc->encode(random_mel(12, 3)).values.numel() == enc->style_dim());
    CHECK((a.values == 0).all().item<bool>());

    torch::optim::SGD opt(enc->parameters(), torch::optim::SGDOptions(0.1));
    const auto loss = (enc->null_embedding().values - 1.0).pow(2).sum();
    loss.backward();
    opt.step();
    CHECK_FALSE(torch::equal(enc->null_embedding().values, torch::zeros({6})));
  }

  TEST_CASE("encoder is differentiable") {
    StyleEncoder enc(small("attentive"), 80);
    enc->encode(random_mel(20, 9)).values.sum().backward();
    int with_grad = 0;
    for (const auto& p : enc->named_parameters()) {
      if (p.key() == "null_embedding") continue;
      CHECK(p.value().grad().defined());
      if (p.value().grad().defined() && p.value().grad().abs().sum().item<float>() > 0) ++with_grad;
    }
    CHECK(with_grad >= 6);
  }

  TEST_CASE("finite-difference gradient check in double precision") {
    for (const char* pooling : {"mean", "attentive"}) {
      CAPTURE(pooling);
      torch::manual_seed(11);
      StyleEncoder enc(small(pooling), 16);
      enc->to(torch::kFloat64);
      const auto mel = torch::randn({2, 16, 12}, torch::kFloat64);
      auto mask = torch::ones({2, 1, 12}, torch::kFloat64);
      mask[1].narrow(1, 9, 3).zero_();
      const auto target = torch::randn({2, 6}, torch::kFloat64);
      auto loss = [&] { return (enc->forward(mel, mask) - target).pow(2).sum(); };
      const auto r = testing::grad_check(testing::named(*enc), loss, 60, 5);
      CAPTURE(r.worst);
      CHECK(r.checked == 60);
      CHECK(r.max_rel_error < 1e-3);
    }
  }
}
