/*
 * Copyright 2026 The ABC-DFL Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <gtest/gtest.h>

#include <array>

#include "abcdfl/crypto.hpp"

namespace abcdfl {
namespace {

struct Signers {
  KeyRegistry registry;
  std::vector<KeyPair> keys;
};

Signers make_signers(int n, std::uint64_t seed) {
  Signers s;
  SeededRng rng(seed, Stream::kTest);
  for (int i = 0; i < n; ++i) {
    s.keys.push_back(KeyPair::generate(rng));
    s.registry.add(s.keys.back());
  }
  return s;
}

PartialSignature partial(const KeyPair& k, const std::string& digest) { return {k.public_key, sign(k.secret, digest)}; }

TEST(Signatures, SignVerifyAndTamper) {
  auto s = make_signers(2, 1);
  const auto sig = sign(s.keys[0].secret, "block-17");
  EXPECT_TRUE(verify(s.registry, s.keys[0].public_key, "block-17", sig));
  EXPECT_FALSE(verify(s.registry, s.keys[0].public_key, "block-18", sig));
  EXPECT_FALSE(verify(s.registry, s.keys[1].public_key, "block-17", sig));
  auto bad = sig;
  bad[0] ^= 1;
  EXPECT_FALSE(verify(s.registry, s.keys[0].public_key, "block-17", bad));
  KeyRegistry empty;
  EXPECT_FALSE(verify(empty, s.keys[0].public_key, "block-17", sig));
}

TEST(Signatures, KeysAreDeterministic) {
  SeededRng a(5, Stream::kTest);
  SeededRng b(5, Stream::kTest);
  EXPECT_EQ(KeyPair::generate(a).public_key, KeyPair::generate(b).public_key);
  const auto k = KeyPair::generate(a);
  EXPECT_EQ(KeyPair::from_secret(k.secret).public_key, k.public_key);
  EXPECT_EQ(derive_public(k.secret), k.public_key);
}

TEST(QuorumCert, ThresholdBoundary) {
  auto s = make_signers(7, 2);
  const std::string d = "digest";
  const int tau = default_threshold(7);
  ASSERT_EQ(tau, 5);
  std::vector<PartialSignature> parts;
  for (int i = 0; i < tau - 1; ++i) parts.push_back(partial(s.keys[i], d));
  EXPECT_FALSE(verify_quorum_cert(build_quorum_cert(d, parts, tau), s.registry));
  parts.push_back(partial(s.keys[tau - 1], d));
  EXPECT_TRUE(verify_quorum_cert(build_quorum_cert(d, parts, tau), s.registry));

  // τ-1 valid partials plus one signature over a different digest.
  std::vector<PartialSignature> mixed(parts.begin(), parts.end() - 1);
  mixed.push_back(partial(s.keys[tau - 1], "other"));
  EXPECT_FALSE(verify_quorum_cert(build_quorum_cert(d, mixed, tau), s.registry));

  // Duplicated signers count once.
  std::vector<PartialSignature> dup(parts.begin(), parts.end() - 1);
  dup.push_back(parts[0]);
  EXPECT_FALSE(verify_quorum_cert(build_quorum_cert(d, dup, tau), s.registry));
}

TEST(QuorumCert, AllowedSetFiltersSigners) {
  auto s = make_signers(7, 3);
  const std::string d = "x";
  std::vector<PartialSignature> parts;
  for (const auto& k : s.keys) parts.push_back(partial(k, d));
  const auto cert = build_quorum_cert(d, parts, 5);
  std::vector<PublicKey> allowed;
  for (int i = 0; i < 4; ++i) allowed.push_back(s.keys[i].public_key);
  EXPECT_EQ(count_valid_signers(cert, s.registry, &allowed), 4);
  EXPECT_FALSE(verify_quorum_cert(cert, s.registry, &allowed));
  EXPECT_TRUE(verify_quorum_cert(cert, s.registry));
}

TEST(QuorumCert, ExhaustiveSubsets) {
  auto s = make_signers(7, 4);
  const std::string d = "im-cid";
  for (int mask = 0; mask < (1 << 7); ++mask) {
    std::vector<PartialSignature> parts;
    for (int i = 0; i < 7; ++i) {
      if (mask & (1 << i)) parts.push_back(partial(s.keys[i], d));
    }
    const bool want = __builtin_popcount(static_cast<unsigned>(mask)) >= 5;
    EXPECT_EQ(verify_quorum_cert(build_quorum_cert(d, parts, 5), s.registry), want) << mask;
  }
}

TEST(QuorumCert, DefaultThreshold) {
  EXPECT_EQ(default_threshold(1), 1);
  EXPECT_EQ(default_threshold(3), 2);
  EXPECT_EQ(default_threshold(4), 3);
  EXPECT_EQ(default_threshold(7), 5);
  EXPECT_EQ(default_threshold(9), 6);
}

TEST(Shamir, EverySubsetReconstructs) {
  SeededRng rng(6, Stream::kTest);
  const std::uint64_t secret = 123456789;
  const auto shares = shamir_share(secret, 3, 5, rng);
  ASSERT_EQ(shares.size(), 5u);
  int subsets = 0;
  for (int a = 0; a < 5; ++a) {
    for (int b = a + 1; b < 5; ++b) {
      for (int c = b + 1; c < 5; ++c) {
        std::vector<ShamirShare> pick{shares[a], shares[b], shares[c]};
        EXPECT_EQ(shamir_reconstruct(pick), secret);
        ++subsets;
      }
    }
  }
  EXPECT_EQ(subsets, 10);
}

TEST(Shamir, TooFewOrDuplicateSharesFail) {
  SeededRng rng(7, Stream::kTest);
  const auto shares = shamir_share(42, 3, 5, rng);
  std::vector<ShamirShare> two{shares[0], shares[1]};
  EXPECT_THROW(shamir_reconstruct(two), CryptoError);
  std::vector<ShamirShare> dup{shares[0], shares[0], shares[1]};
  EXPECT_THROW(shamir_reconstruct(dup), CryptoError);
  EXPECT_THROW(shamir_share(kShamirPrime, 3, 5, rng), CryptoError);
  EXPECT_THROW(shamir_share(1, 6, 5, rng), CryptoError);
}

TEST(Shamir, RandomSecrets) {
  SeededRng rng(8, Stream::kTest);
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t secret = rng.below(kShamirPrime);
    const int total = 2 + static_cast<int>(rng.below(8));
    const int tau = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(total)));
    auto shares = shamir_share(secret, tau, total, rng);
    rng.shuffle(shares);
    std::vector<ShamirShare> pick(shares.begin(), shares.begin() + tau);
    EXPECT_EQ(shamir_reconstruct(pick), secret);
  }
}

TEST(Vrf, VerifyAndTamper) {
  auto s = make_signers(2, 9);
  const auto out = vrf_eval(s.keys[0].secret, "epoch-3");
  EXPECT_EQ(vrf_eval(s.keys[0].secret, "epoch-3"), out);
  EXPECT_TRUE(vrf_verify(s.registry, s.keys[0].public_key, "epoch-3", out));
  EXPECT_FALSE(vrf_verify(s.registry, s.keys[0].public_key, "epoch-4", out));
  EXPECT_FALSE(vrf_verify(s.registry, s.keys[1].public_key, "epoch-3", out));
  auto bad_value = out;
  bad_value.value ^= 1;
  EXPECT_FALSE(vrf_verify(s.registry, s.keys[0].public_key, "epoch-3", bad_value));
  auto bad_proof = out;
  bad_proof.proof[3] ^= 0x80;
  EXPECT_FALSE(vrf_verify(s.registry, s.keys[0].public_key, "epoch-3", bad_proof));
}

TEST(Vrf, ExtendChain) {
  const auto chain = vrf_extend(77, 4);
  ASSERT_EQ(chain.size(), 4u);
  EXPECT_EQ(chain[0], 77u);
  for (std::size_t i = 1; i < chain.size(); ++i) EXPECT_EQ(chain[i], hash_u64(chain[i - 1]));
  EXPECT_THROW(vrf_extend(1, 0), CryptoError);
}

TEST(Vrf, OutputsUniformOverBuckets) {
  auto s = make_signers(1, 10);
  constexpr int kBuckets = 16;
  constexpr int kDraws = 16000;
  std::array<int, kBuckets> counts{};
  for (int i = 0; i < kDraws; ++i) {
    const auto out = vrf_eval(s.keys[0].secret, "seed-" + std::to_string(i));
    counts[out.value % kBuckets] += 1;
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(kDraws) / kBuckets;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 15 degrees of freedom, p = 0.001.
  EXPECT_LT(chi2, 37.7);
}

}  // namespace
}  // namespace abcdfl
