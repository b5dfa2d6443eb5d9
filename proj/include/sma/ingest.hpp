#pragma once

// Rating data: MovieLens loaders, dense re-indexing, seeded splits and the
// binary transform used by the top-N task.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sma/error.hpp"
#include "sma/random.hpp"

namespace sma {

// ml10m uses the ml1m layout with half-star ratings.
enum class DataFormat { kMl100k, kMl1m, kMl10m };

inline DataFormat parse_format(std::string_view s) {
  if (s == "ml100k") return DataFormat::kMl100k;
  if (s == "ml1m") return DataFormat::kMl1m;
  if (s == "ml10m") return DataFormat::kMl10m;
  throw ConfigError("unknown data format '" + std::string(s) + "' (expected ml100k, ml1m or ml10m)");
}

inline const char* to_string(DataFormat f) {
  switch (f) {
    case DataFormat::kMl100k: return "ml100k";
    case DataFormat::kMl1m: return "ml1m";
    case DataFormat::kMl10m: return "ml10m";
  }
  return "?";
}

inline double min_rating(DataFormat f) { return f == DataFormat::kMl10m ? 0.5 : 1.0; }

struct RatingTriple {
  std::int64_t user_raw_id = 0;
  std::int64_t item_raw_id = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;
};

struct Entry {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double value = 0.0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Raw id <-> dense index maps. Dense indices follow ascending raw id.
struct IdMaps {
  std::vector<std::int64_t> user_raw;
  std::vector<std::int64_t> item_raw;
  std::unordered_map<std::int64_t, std::uint32_t> user_index;
  std::unordered_map<std::int64_t, std::uint32_t> item_index;

  static std::shared_ptr<const IdMaps> build(std::vector<std::int64_t> users,
                                             std::vector<std::int64_t> items) {
    auto maps = std::make_shared<IdMaps>();
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    for (std::uint32_t i = 0; i < users.size(); ++i) maps->user_index.emplace(users[i], i);
    for (std::uint32_t j = 0; j < items.size(); ++j) maps->item_index.emplace(items[j], j);
    maps->user_raw = std::move(users);
    maps->item_raw = std::move(items);
    return maps;
  }
};

/// Observed entry set over an m x n grid.
struct SparseRatingMatrix {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<Entry> entries;
  std::vector<std::int64_t> timestamps;  // parallel to entries; kept, never used in training
  std::shared_ptr<const IdMaps> ids;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }

  /// Throws DataError on out-of-range indices or duplicate (user, item) pairs.
  void validate() const {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(entries.size() * 2);
    for (const auto& e : entries) {
      if (e.user >= m || e.item >= n) throw DataError("entry index outside matrix dimensions");
      if (!seen.insert(key(e)).second) throw DataError("duplicate (user, item) pair in matrix");
    }
  }

  static std::uint64_t key(const Entry& e) noexcept {
    return (std::uint64_t{e.user} << 32) | e.item;
  }

  /// Copy with the same dimensions and id maps but a different entry list.
  SparseRatingMatrix with_entries(std::vector<Entry> es, std::vector<std::int64_t> ts = {}) const {
    SparseRatingMatrix out;
    out.m = m;
    out.n = n;
    out.ids = ids;
    out.entries = std::move(es);
    out.timestamps = std::move(ts);
    return out;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

inline std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + sep.size();
  }
}

}  // namespace detail

/// Parses one rating line. Returns nullopt for blank and '#' comment lines.
inline std::optional<RatingTriple> parse_rating_line(std::string_view line, DataFormat format,
                                                     std::size_t line_no) {
  line = detail::trim(line);
  if (line.empty() || line.front() == '#') return std::nullopt;
  const auto fields = detail::split(line, format == DataFormat::kMl100k ? "\t" : "::");
  auto fail = [&](const std::string& why) {
    return DataError("line " + std::to_string(line_no) + ": " + why);
  };
  if (fields.size() != 4) throw fail("expected 4 fields, got " + std::to_string(fields.size()));
  RatingTriple t;
  if (!detail::parse_number(fields[0], t.user_raw_id) || t.user_raw_id < 0)
    throw fail("bad user id");
  if (!detail::parse_number(fields[1], t.item_raw_id) || t.item_raw_id < 0)
    throw fail("bad item id");
  if (!detail::parse_number(fields[2], t.rating) || !std::isfinite(t.rating))
    throw fail("bad rating");
  if (t.rating < min_rating(format) || t.rating > 5.0)
    throw fail("rating outside [" + std::string(format == DataFormat::kMl10m ? "0.5" : "1") + ", 5]");
  if (!detail::parse_number(fields[3], t.timestamp)) throw fail("bad timestamp");
  return t;
}

/// Dense re-indexing of raw triples. `maps` may be supplied to reuse existing
/// id maps (every raw id must then be present in them).
inline SparseRatingMatrix build_matrix(const std::vector<RatingTriple>& triples,
                                       std::shared_ptr<const IdMaps> maps = nullptr) {
  if (!maps) {
    std::vector<std::int64_t> users, items;
    users.reserve(triples.size());
    items.reserve(triples.size());
    for (const auto& t : triples) {
      users.push_back(t.user_raw_id);
      items.push_back(t.item_raw_id);
    }
    maps = IdMaps::build(std::move(users), std::move(items));
  }
  SparseRatingMatrix out;
  out.m = maps->user_raw.size();
  out.n = maps->item_raw.size();
  out.entries.reserve(triples.size());
  out.timestamps.reserve(triples.size());
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(triples.size() * 2);
  for (std::size_t k = 0; k < triples.size(); ++k) {
    const auto& t = triples[k];
    const auto u = maps->user_index.find(t.user_raw_id);
    const auto i = maps->item_index.find(t.item_raw_id);
    if (u == maps->user_index.end() || i == maps->item_index.end())
      throw DataError("raw id not present in id maps");
    Entry e{u->second, i->second, t.rating};
    if (!seen.insert(SparseRatingMatrix::key(e)).second)
      throw DataError("duplicate (user, item) pair: user " + std::to_string(t.user_raw_id) +
                      ", item " + std::to_string(t.item_raw_id));
    out.entries.push_back(e);
    out.timestamps.push_back(t.timestamp);
  }
  out.ids = std::move(maps);
  return out;
}

inline std::vector<RatingTriple> read_triples(std::istream& in, DataFormat format) {
  std::vector<RatingTriple> triples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto t = parse_rating_line(line, format, line_no)) triples.push_back(*t);
  }
  return triples;
}

inline std::vector<RatingTriple> read_triples(const std::filesystem::path& path, DataFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  auto triples = read_triples(in, format);
  if (triples.empty()) throw DataError(path.string() + ": no ratings");
  return triples;
}

inline SparseRatingMatrix load_movielens(std::istream& in, DataFormat format) {
  auto triples = read_triples(in, format);
  if (triples.empty()) throw DataError("no ratings in input");
  return build_matrix(triples);
}

inline SparseRatingMatrix load_movielens(const std::filesystem::path& path, DataFormat format) {
  return build_matrix(read_triples(path, format));
}

/// Raw ids of a dense entry.
inline RatingTriple to_raw(const SparseRatingMatrix& mat, std::size_t k) {
  const auto& e = mat.entries[k];
  RatingTriple t;
  t.user_raw_id = mat.ids->user_raw[e.user];
  t.item_raw_id = mat.ids->item_raw[e.item];
  t.rating = e.value;
  t.timestamp = k < mat.timestamps.size() ? mat.timestamps[k] : 0;
  return t;
}

struct SplitPair {
  SparseRatingMatrix train;
  SparseRatingMatrix test;
  double ratio = 0.9;
  std::uint64_t seed = 0;
};

namespace detail {

/// Keeps `keep` of the entries chosen uniformly; returns (kept, dropped), each
/// in original order.
inline std::pair<SparseRatingMatrix, SparseRatingMatrix> partition(const SparseRatingMatrix& mat,
                                                                   std::size_t keep, Rng& rng) {
  std::vector<std::size_t> order(mat.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  shuffle(order, rng);
  std::vector<char> kept(mat.size(), 0);
  for (std::size_t k = 0; k < keep; ++k) kept[order[k]] = 1;
  std::vector<Entry> a, b;
  std::vector<std::int64_t> ta, tb;
  a.reserve(keep);
  b.reserve(mat.size() - keep);
  const bool has_ts = mat.timestamps.size() == mat.size();
  for (std::size_t k = 0; k < mat.size(); ++k) {
    auto& dst = kept[k] ? a : b;
    auto& dts = kept[k] ? ta : tb;
    dst.push_back(mat.entries[k]);
    if (has_ts) dts.push_back(mat.timestamps[k]);
  }
  return {mat.with_entries(std::move(a), std::move(ta)), mat.with_entries(std::move(b), std::move(tb))};
}

}  // namespace detail

/// Global uniform split; |train| = round(ratio * |entries|), clamped so both
/// sides are non-empty.
inline SplitPair split_train_test(const SparseRatingMatrix& mat, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  if (mat.size() < 2) throw DataError("need at least 2 entries to split");
  auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(mat.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, mat.size() - 1);
  Rng rng(derive_seed(seed, stream::kSplit));
  auto [train, test] = detail::partition(mat, n_train, rng);
  return SplitPair{std::move(train), std::move(test), ratio, seed};
}

/// Seeded uniform subsample keeping round(fraction * |entries|) entries.
inline SparseRatingMatrix subsample(const SparseRatingMatrix& mat, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("train fraction must lie in (0, 1]");
  if (fraction == 1.0) return mat;
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(mat.size())));
  if (keep == 0) throw DataError("train fraction leaves no training entries");
  Rng rng(derive_seed(seed, stream::kSubsample));
  return detail::partition(mat, keep, rng).first;
}

/// Every observed entry becomes +1.
inline SparseRatingMatrix binarize(SparseRatingMatrix mat) {
  for (auto& e : mat.entries) e.value = 1.0;
  return mat;
}

/// Writes one side of a split in the ml100k TAB format behind a
/// `# seed=<s> ratio=<r>` header line.
inline void write_split_side(const SparseRatingMatrix& mat, const SplitPair& split,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# seed=" << split.seed << " ratio=" << split.ratio << '\n';
  for (std::size_t k = 0; k < mat.size(); ++k) {
    const auto t = to_raw(mat, k);
    out << t.user_raw_id << '\t' << t.item_raw_id << '\t' << t.rating << '\t' << t.timestamp << '\n';
  }
}

inline void write_split(const SplitPair& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_split_side(split.train, split, dir / "train.tsv");
  write_split_side(split.test, split, dir / "test.tsv");
}

/// Reads a cached split. Id maps are rebuilt from the union of both files so
/// train and test share dimensions.
inline SplitPair load_split(const std::filesystem::path& train_path, const std::filesystem::path& test_path) {
  const auto train = read_triples(train_path, DataFormat::kMl100k);
  const auto test = read_triples(test_path, DataFormat::kMl100k);
  std::vector<std::int64_t> users, items;
  for (const auto* side : {&train, &test})
    for (const auto& t : *side) {
      users.push_back(t.user_raw_id);
      items.push_back(t.item_raw_id);
    }
  auto maps = IdMaps::build(std::move(users), std::move(items));
  SplitPair out{build_matrix(train, maps), build_matrix(test, maps), 0.0, 0};
  std::ifstream in(train_path);
  std::string header;
  std::getline(in, header);
  if (header.rfind("# ", 0) == 0) {
    std::istringstream hs(header.substr(2));
    std::string tok;
    while (hs >> tok) {
      if (tok.rfind("seed=", 0) == 0) detail::parse_number(std::string_view(tok).substr(5), out.seed);
      if (tok.rfind("ratio=", 0) == 0) detail::parse_number(std::string_view(tok).substr(6), out.ratio);
    }
  }
  std::unordered_set<std::uint64_t> seen;
  for (const auto& e : out.train.entries) seen.insert(SparseRatingMatrix::key(e));
  for (const auto& e : out.test.entries)
    if (seen.count(SparseRatingMatrix::key(e))) throw DataError("train and test overlap");
  return out;
}

}  // namespace sma
