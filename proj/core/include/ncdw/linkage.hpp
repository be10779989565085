#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ncdw/model.hpp"

namespace ncdw {

// Four characters: an uppercase letter followed by three digits in 0..6.
class SoundexCode {
 public:
  static SoundexCode parse(std::string_view text);  // throws Error(validation)

  std::string_view str() const noexcept { return {chars_.data(), chars_.size()}; }
  char letter() const noexcept { return chars_[0]; }

  friend auto operator<=>(const SoundexCode&, const SoundexCode&) = default;

 private:
  friend SoundexCode soundex_encode(std::string_view);
  SoundexCode() = default;
  std::array<char, 4> chars_{'A', '0', '0', '0'};
};

// Digit class of an uppercase letter; 0 stands for the empty mapping
// (A E I O U H W Y) and for anything that is not A..Z.
int soundex_class(char upper) noexcept;

// Strips Latin diacritics, uppercases, drops everything that is not A..Z.
std::string normalize_name_token(std::string_view token);

// Letters that map to nothing are skipped without touching the previous
// digit, so "BAB" and "BB" both encode to B000. Throws Error(invalid_name)
// when the token has no letters.
SoundexCode soundex_encode(std::string_view name_token);

// Per-token codes in input order; tokens without letters are dropped. Throws
// Error(invalid_name) when no token is left.
std::vector<SoundexCode> encode_full_name(std::string_view full_name);

enum class Gender : std::uint8_t { male, female, other, unknown };

std::string_view to_string(Gender g) noexcept;
Gender parse_gender(std::string_view text) noexcept;  // unrecognised -> unknown

struct LinkKey {
  std::vector<SoundexCode> token_codes;
  int age_band = 0;
  Gender gender = Gender::unknown;
  std::optional<SurrogateKey> geo;

  // Throws Error(validation) on an empty code list.
  static LinkKey make(std::vector<SoundexCode> codes, int age_years, Gender gender,
                      std::optional<SurrogateKey> geo = std::nullopt);

  // Sorted codes joined by '-'; the blocking key of the index.
  std::string block_key() const;
};

// floor(age / 10) clamped to [0, 12].
int age_band_for(int age_years) noexcept;

inline constexpr std::size_t kMinSecretBytes = 16;

// Keyed one-way pseudonym: HMAC-SHA256 over a canonical serialisation of the
// link key and date-of-birth/age, truncated to 128 bits and hex encoded.
// Token codes are serialised sorted, so token order does not affect the PIK.
// Geography is deliberately excluded: a patient keeps one PIK across sites.
Pik make_pik(const LinkKey& key, std::string_view dob_or_age, std::span<const std::uint8_t> secret);

enum class MatchGrade : std::uint8_t { exact, near };
std::string_view to_string(MatchGrade g) noexcept;

struct Match {
  Pik pik;
  MatchGrade grade;

  friend bool operator==(const Match&, const Match&) = default;
};

// Blocking index over previously seen link keys. Inserts are exclusive;
// queries may run concurrently with each other between insert batches.
class LinkageIndex {
 public:
  void insert(const LinkKey& key, const Pik& pik);
  void insert_batch(std::span<const std::pair<LinkKey, Pik>> entries);

  // Candidates share the token-code multiset, have compatible gender (equal
  // or either unknown) and an age band within one. Grade is exact when age
  // band, gender and geography all agree, near otherwise. Sorted by PIK.
  std::vector<Match> match(const LinkKey& query) const;

  std::size_t size() const;

 private:
  struct Entry {
    LinkKey key;
    Pik pik;
  };
  void insert_locked(const LinkKey& key, const Pik& pik);

  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::vector<Entry>> blocks_;
  std::size_t size_ = 0;
};

std::vector<Match> match_records(const LinkKey& query, const LinkageIndex& index);

}  // namespace ncdw
