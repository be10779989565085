#include "ncdw/linkage.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <mutex>

#include "ncdw/digest.hpp"
#include "ncdw/error.hpp"

namespace ncdw {
namespace {

// Base letters for U+00C0..U+017F; '.' marks code points without one.
constexpr std::string_view kLatinFold =
    "AAAAAAACEEEEIIIIDNOOOOO.OUUUUYTSAAAAAAACEEEEIIIIDNOOOOO.OUUUUYTY"
    "AAAAAACCCCCCCCDDDDEEEEEEEEEEGGGGGGGGHHHHIIIIIIIIIIIIJJKKKLLLLLLL"
    "LLLNNNNNNNNNOOOOOOOORRRRRRSSSSSSSSTTTTTTUUUUUUUUUUUUWWYYYZZZZZZS";
static_assert(kLatinFold.size() == 0x180 - 0xC0);

// Decodes one UTF-8 sequence; malformed bytes come back as U+FFFD.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i++]);
  if (b0 < 0x80) return b0;
  int extra = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    extra = 3;
    cp = b0 & 0x07;
  } else {
    return 0xFFFD;
  }
  for (int k = 0; k < extra; ++k) {
    if (i >= s.size() || (static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) return 0xFFFD;
    cp = (cp << 6) | (static_cast<unsigned char>(s[i++]) & 0x3F);
  }
  return cp;
}

}  // namespace

SoundexCode SoundexCode::parse(std::string_view text) {
  if (text.size() != 4 || text[0] < 'A' || text[0] > 'Z') {
    throw Error(ErrorKind::validation, fmt::format("'{}' is not a Soundex code", text));
  }
  SoundexCode code;
  code.chars_[0] = text[0];
  for (int i = 1; i < 4; ++i) {
    if (text[i] < '0' || text[i] > '6') {
      throw Error(ErrorKind::validation, fmt::format("'{}' is not a Soundex code", text));
    }
    code.chars_[i] = text[i];
  }
  return code;
}

int soundex_class(char upper) noexcept {
  // A  B  C  D  E  F  G  H  I  J  K  L  M  N  O  P  Q  R  S  T  U  V  W  X  Y  Z
  static constexpr std::array<std::int8_t, 26> kClass = {0, 1, 2, 3, 0, 1, 2, 0, 0, 2, 2, 4, 5,
                                                         5, 0, 1, 2, 6, 2, 3, 0, 1, 0, 2, 0, 2};
  if (upper < 'A' || upper > 'Z') return 0;
  return kClass[static_cast<std::size_t>(upper - 'A')];
}

std::string normalize_name_token(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (std::size_t i = 0; i < token.size();) {
    const char32_t cp = next_code_point(token, i);
    char base = 0;
    if (cp < 0x80) {
      const auto c = static_cast<unsigned char>(cp);
      if (std::isalpha(c)) base = static_cast<char>(std::toupper(c));
    } else if (cp >= 0xC0 && cp < 0x180) {
      const char folded = kLatinFold[cp - 0xC0];
      if (folded != '.') base = folded;
    }
    if (base != 0) out.push_back(base);
  }
  return out;
}

SoundexCode soundex_encode(std::string_view name_token) {
  const std::string letters = normalize_name_token(name_token);
  if (letters.empty()) {
    throw Error(ErrorKind::invalid_name, "name token has no encodable letters");
  }
  SoundexCode code;
  code.chars_ = {letters[0], '0', '0', '0'};
  int previous = soundex_class(letters[0]);
  std::size_t out = 1;
  for (std::size_t i = 1; i < letters.size() && out < 4; ++i) {
    const int digit = soundex_class(letters[i]);
    if (digit == 0) continue;  // empty mapping leaves the previous digit alone
    if (digit != previous) {
      code.chars_[out++] = static_cast<char>('0' + digit);
      previous = digit;
    }
  }
  return code;
}

std::vector<SoundexCode> encode_full_name(std::string_view full_name) {
  std::vector<SoundexCode> codes;
  std::size_t i = 0;
  while (i < full_name.size()) {
    while (i < full_name.size() && std::isspace(static_cast<unsigned char>(full_name[i]))) ++i;
    const std::size_t start = i;
    while (i < full_name.size() && !std::isspace(static_cast<unsigned char>(full_name[i]))) ++i;
    if (i == start) break;
    const std::string_view token = full_name.substr(start, i - start);
    if (!normalize_name_token(token).empty()) codes.push_back(soundex_encode(token));
  }
  if (codes.empty()) {
    throw Error(ErrorKind::invalid_name, "name has no encodable token");
  }
  return codes;
}

std::string_view to_string(Gender g) noexcept {
  switch (g) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    case Gender::other: return "other";
    case Gender::unknown: return "unknown";
  }
  return "unknown";
}

Gender parse_gender(std::string_view text) noexcept {
  const std::string g = normalize_text(text);
  if (g == "m" || g == "male") return Gender::male;
  if (g == "f" || g == "female") return Gender::female;
  if (g == "o" || g == "other") return Gender::other;
  return Gender::unknown;
}

int age_band_for(int age_years) noexcept { return std::clamp(age_years / 10, 0, 12); }

LinkKey LinkKey::make(std::vector<SoundexCode> codes, int age_years, Gender gender,
                      std::optional<SurrogateKey> geo) {
  if (codes.empty()) throw Error(ErrorKind::validation, "link key needs at least one token code");
  return LinkKey{std::move(codes), age_band_for(std::max(age_years, 0)), gender, geo};
}

std::string LinkKey::block_key() const {
  std::vector<SoundexCode> sorted = token_codes;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (const auto& c : sorted) {
    if (!out.empty()) out.push_back('-');
    out += c.str();
  }
  return out;
}

Pik make_pik(const LinkKey& key, std::string_view dob_or_age, std::span<const std::uint8_t> secret) {
  if (secret.size() < kMinSecretBytes) {
    throw Error(ErrorKind::key, fmt::format("link secret must be at least {} bytes", kMinSecretBytes));
  }
  if (key.token_codes.empty()) throw Error(ErrorKind::validation, "link key needs at least one token code");
  const std::string canonical = fmt::format("ncdw-pik-v1|codes={}|band={}|gender={}|dob={}", key.block_key(),
                                            key.age_band, to_string(key.gender), normalize_text(dob_or_age));
  const Digest256 mac = hmac_sha256(secret, canonical);
  return Pik::parse(to_hex(std::span<const std::uint8_t>(mac.data(), Pik::kLength / 2)));
}

std::string_view to_string(MatchGrade g) noexcept { return g == MatchGrade::exact ? "exact" : "near"; }

void LinkageIndex::insert_locked(const LinkKey& key, const Pik& pik) {
  blocks_[key.block_key()].push_back(Entry{key, pik});
  ++size_;
}

void LinkageIndex::insert(const LinkKey& key, const Pik& pik) {
  std::unique_lock lock(mutex_);
  insert_locked(key, pik);
}

void LinkageIndex::insert_batch(std::span<const std::pair<LinkKey, Pik>> entries) {
  std::unique_lock lock(mutex_);
  for (const auto& [key, pik] : entries) insert_locked(key, pik);
}

std::size_t LinkageIndex::size() const {
  std::shared_lock lock(mutex_);
  return size_;
}

std::vector<Match> LinkageIndex::match(const LinkKey& query) const {
  std::shared_lock lock(mutex_);
  std::vector<Match> out;
  const auto it = blocks_.find(query.block_key());
  if (it == blocks_.end()) return out;
  for (const Entry& e : it->second) {
    const bool gender_ok =
        e.key.gender == query.gender || e.key.gender == Gender::unknown || query.gender == Gender::unknown;
    const int band_gap = std::abs(e.key.age_band - query.age_band);
    if (!gender_ok || band_gap > 1) continue;
    const bool exact = band_gap == 0 && e.key.gender == query.gender && e.key.geo == query.geo;
    const MatchGrade grade = exact ? MatchGrade::exact : MatchGrade::near;
    auto found = std::find_if(out.begin(), out.end(), [&](const Match& m) { return m.pik == e.pik; });
    if (found == out.end()) {
      out.push_back(Match{e.pik, grade});
    } else if (grade == MatchGrade::exact) {
      found->grade = MatchGrade::exact;
    }
  }
  std::sort(out.begin(), out.end(), [](const Match& a, const Match& b) { return a.pik < b.pik; });
  return out;
}

std::vector<Match> match_records(const LinkKey& query, const LinkageIndex& index) { return index.match(query); }

}  // namespace ncdw
