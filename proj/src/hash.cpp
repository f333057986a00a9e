#include "onadesep/hash.h"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <memory>

#include "onadesep/errors.h"
#include "onadesep/rng.h"

namespace onadesep {
namespace {

std::array<unsigned char, 32> sha256(const void* data, std::size_t size) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  std::array<unsigned char, 32> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data, size) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1 || len != 32) {
    throw Error("SHA-256 computation failed");
  }
  return digest;
}

std::string to_hex(const std::array<unsigned char, 32>& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::span<const std::byte> data) {
  return to_hex(sha256(data.data(), data.size()));
}

std::string sha256_hex(std::string_view text) {
  return to_hex(sha256(text.data(), text.size()));
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                          std::uint64_t index) {
  std::string buf;
  buf.reserve(16 + purpose.size());
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((seed >> (8 * i)) & 0xff));
  buf.append(purpose);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((index >> (8 * i)) & 0xff));
  const auto digest = sha256(buf.data(), buf.size());
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= static_cast<std::uint64_t>(digest[i]) << (8 * i);
  return out;
}

}  // namespace onadesep
