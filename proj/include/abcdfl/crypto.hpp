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
#pragma once

// Contract-preserving stand-ins for signatures, threshold endorsement,
// Shamir sharing and a VRF. None of this is real cryptography: verification
// goes through a simulation-scoped registry that can look up the secret for
// a public key.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abcdfl/core.hpp"

namespace abcdfl {

using SecretKey = Digest;
using PublicKey = Digest;
using Signature = Digest;

struct KeyPair {
  SecretKey secret{};
  PublicKey public_key{};

  static KeyPair from_secret(const SecretKey& secret);
  static KeyPair generate(SeededRng& rng);
};

PublicKey derive_public(const SecretKey& secret);
Signature sign(const SecretKey& secret, std::string_view message);

class KeyRegistry {
 public:
  void add(const KeyPair& pair);
  bool contains(const PublicKey& pk) const;
  std::size_t size() const { return secrets_.size(); }
  // Recomputes the keyed hash with the registered secret.
  bool verify(const PublicKey& pk, std::string_view message, const Signature& sig) const;
  std::optional<SecretKey> secret_for(const PublicKey& pk) const;

 private:
  std::map<PublicKey, SecretKey> secrets_;
};

bool verify(const KeyRegistry& registry, const PublicKey& pk, std::string_view message, const Signature& sig);

// ---------------------------------------------------------------------------
// Quorum certificates
// ---------------------------------------------------------------------------

struct PartialSignature {
  PublicKey signer{};
  Signature signature{};
};

struct QuorumCert {
  std::string digest;
  std::vector<PartialSignature> partials;
  int threshold = 1;
};

// Keeps the first partial per signer.
QuorumCert build_quorum_cert(const std::string& digest, std::span<const PartialSignature> partials, int threshold);
// Valid iff at least `threshold` distinct signers have valid signatures over
// the digest. When `allowed` is given, signers outside it are ignored.
bool verify_quorum_cert(const QuorumCert& cert, const KeyRegistry& registry,
                        const std::vector<PublicKey>* allowed = nullptr);
int count_valid_signers(const QuorumCert& cert, const KeyRegistry& registry,
                        const std::vector<PublicKey>* allowed = nullptr);

// ceil(2k/3), at least 1.
int default_threshold(int k);

// ---------------------------------------------------------------------------
// Shamir secret sharing over a prime field
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kShamirPrime = 2147483647ULL;  // 2^31 - 1

struct ShamirShare {
  std::uint64_t x = 0;
  std::uint64_t y = 0;
  std::uint64_t prime = kShamirPrime;
  int threshold = 1;
  int total = 1;
};

std::vector<ShamirShare> shamir_share(std::uint64_t secret, int threshold, int total, SeededRng& rng,
                                      std::uint64_t prime = kShamirPrime);
// Lagrange interpolation at zero over the first `threshold` shares.
std::uint64_t shamir_reconstruct(std::span<const ShamirShare> shares);

// ---------------------------------------------------------------------------
// VRF stub
// ---------------------------------------------------------------------------

inline constexpr int kVrfBits = 64;

struct VrfOutput {
  std::uint64_t value = 0;
  Digest proof{};

  bool operator==(const VrfOutput&) const = default;
};

VrfOutput vrf_eval(const SecretKey& secret, std::string_view seed);
bool vrf_verify(const KeyRegistry& registry, const PublicKey& pk, std::string_view seed, const VrfOutput& out);
// [r, H(r), H(H(r)), ...] of length m.
std::vector<std::uint64_t> vrf_extend(std::uint64_t r, int m);
std::uint64_t hash_u64(std::uint64_t value);

}  // namespace abcdfl
