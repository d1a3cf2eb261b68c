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
#include "abcdfl/crypto.hpp"

#include <algorithm>
#include <set>

namespace abcdfl {

namespace {

std::string bytes_of(const Digest& d) { return std::string(d.begin(), d.end()); }

std::string be_bytes(std::uint64_t v) {
  std::string out(8, '\0');
  for (int i = 7; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = static_cast<char>(v & 0xff);
    v >>= 8;
  }
  return out;
}

std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t p) {
  return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % p);
}

std::uint64_t powmod(std::uint64_t base, std::uint64_t exp, std::uint64_t p) {
  std::uint64_t result = 1 % p;
  base %= p;
  while (exp > 0) {
    if (exp & 1) result = mulmod(result, base, p);
    base = mulmod(base, base, p);
    exp >>= 1;
  }
  return result;
}

}  // namespace

PublicKey derive_public(const SecretKey& secret) { return sha256("pk|" + bytes_of(secret)); }

KeyPair KeyPair::from_secret(const SecretKey& secret) { return KeyPair{secret, derive_public(secret)}; }

KeyPair KeyPair::generate(SeededRng& rng) {
  SecretKey secret{};
  for (std::size_t i = 0; i < secret.size(); i += 8) {
    std::uint64_t v = rng.next_u64();
    for (std::size_t j = 0; j < 8; ++j) secret[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
  }
  return from_secret(secret);
}

Signature sign(const SecretKey& secret, std::string_view message) {
  std::string buf = "sig|" + bytes_of(secret) + "|";
  buf.append(message);
  return sha256(buf);
}

void KeyRegistry::add(const KeyPair& pair) { secrets_[pair.public_key] = pair.secret; }

bool KeyRegistry::contains(const PublicKey& pk) const { return secrets_.count(pk) != 0; }

std::optional<SecretKey> KeyRegistry::secret_for(const PublicKey& pk) const {
  auto it = secrets_.find(pk);
  if (it == secrets_.end()) return std::nullopt;
  return it->second;
}

bool KeyRegistry::verify(const PublicKey& pk, std::string_view message, const Signature& sig) const {
  auto it = secrets_.find(pk);
  if (it == secrets_.end()) return false;
  return sign(it->second, message) == sig;
}

bool verify(const KeyRegistry& registry, const PublicKey& pk, std::string_view message, const Signature& sig) {
  return registry.verify(pk, message, sig);
}

QuorumCert build_quorum_cert(const std::string& digest, std::span<const PartialSignature> partials, int threshold) {
  QuorumCert cert;
  cert.digest = digest;
  cert.threshold = threshold;
  std::set<PublicKey> seen;
  for (const auto& p : partials) {
    if (seen.insert(p.signer).second) cert.partials.push_back(p);
  }
  return cert;
}

int count_valid_signers(const QuorumCert& cert, const KeyRegistry& registry, const std::vector<PublicKey>* allowed) {
  std::set<PublicKey> valid;
  for (const auto& p : cert.partials) {
    if (allowed && std::find(allowed->begin(), allowed->end(), p.signer) == allowed->end()) continue;
    if (registry.verify(p.signer, cert.digest, p.signature)) valid.insert(p.signer);
  }
  return static_cast<int>(valid.size());
}

bool verify_quorum_cert(const QuorumCert& cert, const KeyRegistry& registry, const std::vector<PublicKey>* allowed) {
  if (cert.threshold < 1) return false;
  return count_valid_signers(cert, registry, allowed) >= cert.threshold;
}

int default_threshold(int k) { return std::max(1, (2 * k + 2) / 3); }

std::vector<ShamirShare> shamir_share(std::uint64_t secret, int threshold, int total, SeededRng& rng,
                                      std::uint64_t prime) {
  if (threshold < 1 || threshold > total) throw CryptoError("shamir: need 1 <= threshold <= total");
  if (prime < 3 || secret >= prime) throw CryptoError("shamir: secret must be below the prime");
  if (static_cast<std::uint64_t>(total) >= prime) throw CryptoError("shamir: too many shares for the field");
  std::vector<std::uint64_t> coeffs{secret};
  for (int i = 1; i < threshold; ++i) coeffs.push_back(rng.below(prime));
  std::vector<ShamirShare> shares;
  for (int i = 1; i <= total; ++i) {
    const std::uint64_t x = static_cast<std::uint64_t>(i);
    std::uint64_t y = 0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) y = (mulmod(y, x, prime) + *it) % prime;
    shares.push_back(ShamirShare{x, y, prime, threshold, total});
  }
  return shares;
}

std::uint64_t shamir_reconstruct(std::span<const ShamirShare> shares) {
  if (shares.empty()) throw CryptoError("shamir: no shares");
  const int threshold = shares.front().threshold;
  const std::uint64_t p = shares.front().prime;
  std::set<std::uint64_t> xs;
  for (const auto& s : shares) {
    if (s.prime != p || s.threshold != threshold) throw CryptoError("shamir: inconsistent shares");
    if (s.x == 0 || s.x >= p) throw CryptoError("shamir: invalid share index");
    if (!xs.insert(s.x).second) throw CryptoError("shamir: duplicate share index");
  }
  if (static_cast<int>(shares.size()) < threshold) throw CryptoError("shamir: fewer shares than threshold");
  const auto used = shares.first(static_cast<std::size_t>(threshold));
  std::uint64_t secret = 0;
  for (std::size_t i = 0; i < used.size(); ++i) {
    std::uint64_t num = 1;
    std::uint64_t den = 1;
    for (std::size_t j = 0; j < used.size(); ++j) {
      if (i == j) continue;
      num = mulmod(num, used[j].x, p);
      den = mulmod(den, (used[j].x + p - used[i].x) % p, p);
    }
    const std::uint64_t basis = mulmod(num, powmod(den, p - 2, p), p);
    secret = (secret + mulmod(used[i].y % p, basis, p)) % p;
  }
  return secret;
}

VrfOutput vrf_eval(const SecretKey& secret, std::string_view seed) {
  std::string value_in = "vrf|" + bytes_of(secret) + "|";
  value_in.append(seed);
  std::string proof_in = "vrf-proof|" + bytes_of(secret) + "|";
  proof_in.append(seed);
  return VrfOutput{digest_prefix_u64(sha256(value_in)), sha256(proof_in)};
}

bool vrf_verify(const KeyRegistry& registry, const PublicKey& pk, std::string_view seed, const VrfOutput& out) {
  auto sk = registry.secret_for(pk);
  if (!sk) return false;
  return vrf_eval(*sk, seed) == out;
}

std::uint64_t hash_u64(std::uint64_t value) { return digest_prefix_u64(sha256(be_bytes(value))); }

std::vector<std::uint64_t> vrf_extend(std::uint64_t r, int m) {
  if (m < 1) throw CryptoError("vrf_extend: m must be positive");
  std::vector<std::uint64_t> chain{r};
  while (static_cast<int>(chain.size()) < m) chain.push_back(hash_u64(chain.back()));
  return chain;
}

}  // namespace abcdfl
