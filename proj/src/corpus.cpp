#include "geosage/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <istream>
#include <map>
#include <ostream>

#include "geosage/io.hpp"
#include "geosage/rng.hpp"

namespace geosage {

namespace {

constexpr char kCorpusMagic[] = "GEOSAGE-CORPUS-1\n";
constexpr char kEndMagic[] = "GEOSAGE-END\n";

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end;
}

bool parse_latlon(const std::string& field, double& lat, double& lon) {
  auto parts = split_on(field, ',');
  return parts.size() == 2 && parse_double(parts[0], lat) && parse_double(parts[1], lon);
}

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_str(std::uint64_t h, const std::string& s) {
  h = fnv1a(h, s.data(), s.size());
  return fnv1a(h, "\x1f", 1);  // separator so concatenations don't collide
}

}  // namespace

std::uint64_t dict_hash(const Dictionaries& d) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::uint32_t counts[3] = {static_cast<std::uint32_t>(d.users.size()),
                             static_cast<std::uint32_t>(d.items.size()),
                             static_cast<std::uint32_t>(d.vocab.size())};
  h = fnv1a(h, counts, sizeof(counts));
  for (const auto& s : d.users) h = fnv1a_str(h, s);
  for (const auto& s : d.items) h = fnv1a_str(h, s);
  for (const auto& s : d.vocab) h = fnv1a_str(h, s);
  for (std::size_t i = 0; i < d.item_locations.size(); ++i) {
    double coords[2] = {d.item_locations[i].lat, d.item_locations[i].lon};
    h = fnv1a(h, coords, sizeof(coords));
    const auto& words = d.item_words[i];
    h = fnv1a(h, words.data(), words.size() * sizeof(std::int32_t));
  }
  return h;
}

ParseResult parse_checkins(std::istream& in) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  std::size_t total = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++total;
    auto fields = split_on(line, '\t');
    if (fields.size() != 5) {
      result.malformed.push_back({line_no, "expected 5 tab-separated fields"});
      continue;
    }
    if (fields[0].empty() || fields[1].empty()) {
      result.malformed.push_back({line_no, "empty user or venue id"});
      continue;
    }
    double lat = 0.0, lon = 0.0;
    if (!parse_latlon(fields[2], lat, lon)) {
      result.malformed.push_back({line_no, "location not lat,lon"});
      continue;
    }
    RawCheckin rec;
    rec.user = fields[0];
    rec.item = fields[1];
    try {
      rec.location = GeoPoint(lat, lon);
    } catch (const InvalidCoordinate&) {
      result.malformed.push_back({line_no, "coordinates out of range"});
      continue;
    }
    if (!fields[3].empty()) {
      for (auto& w : split_on(fields[3], ',')) {
        if (!w.empty()) rec.words.push_back(lowercase(std::move(w)));
      }
    }
    if (fields[4] == "0") {
      rec.role = 0;
    } else if (fields[4] == "1") {
      rec.role = 1;
    } else if (fields[4] == "-") {
      rec.role = -1;
    } else {
      result.malformed.push_back({line_no, "role not 0, 1 or -"});
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  if (total > 0 && static_cast<double>(result.malformed.size()) > 0.01 * static_cast<double>(total)) {
    throw ParseError("parse failed: " + std::to_string(result.malformed.size()) + " of " +
                     std::to_string(total) + " lines malformed (threshold 1%)");
  }
  return result;
}

GeoPoint infer_home(const std::vector<UserActivity>& activities, const PyramidConfig& cfg,
                    std::optional<GeoPoint> explicit_home) {
  if (explicit_home) return *explicit_home;
  if (activities.empty()) throw NoData("cannot infer home: user has no activities");
  std::map<CellId, std::int32_t> counts;
  for (const auto& a : activities) ++counts[cell_of(a.location, cfg.height, cfg)];
  // std::map iterates in (level, x, y) order, so the first max wins the tie.
  const CellId* best = nullptr;
  std::int32_t best_count = 0;
  for (const auto& [cell, count] : counts) {
    if (count > best_count) {
      best = &cell;
      best_count = count;
    }
  }
  return centroid(*best, cfg);
}

std::uint32_t label_roles(UserProfile& profile, double d_km) {
  std::uint32_t mismatches = 0;
  for (auto& a : profile.activities) {
    std::int8_t derived = haversine_km(profile.home, a.location) > d_km ? 1 : 0;
    if (a.role != derived) ++mismatches;
    a.role = derived;
  }
  return mismatches;
}

std::vector<SplitTag> split_tags(const std::vector<UserActivity>& activities,
                                 std::int32_t n_users, double fraction, std::uint64_t seed) {
  std::vector<SplitTag> tags(activities.size(), SplitTag::kTrain);
  std::vector<std::vector<std::size_t>> home_idx(static_cast<std::size_t>(n_users));
  std::vector<std::vector<std::size_t>> out_idx(static_cast<std::size_t>(n_users));
  for (std::size_t i = 0; i < activities.size(); ++i) {
    auto u = static_cast<std::size_t>(activities[i].user);
    (activities[i].role == 0 ? home_idx[u] : out_idx[u]).push_back(i);
  }
  Rng rng(seed);
  auto pick = [&](std::vector<std::size_t>& idx, SplitTag tag) {
    auto n_test = static_cast<std::size_t>(fraction * static_cast<double>(idx.size()));
    shuffle_vec(rng, idx);
    for (std::size_t j = 0; j < n_test; ++j) tags[idx[j]] = tag;
  };
  for (std::size_t u = 0; u < static_cast<std::size_t>(n_users); ++u) {
    pick(home_idx[u], SplitTag::kTestHome);
    pick(out_idx[u], SplitTag::kTestOut);
  }
  return tags;
}

SplitDataset split(const std::vector<UserActivity>& activities, std::int32_t n_users,
                   double fraction, std::uint64_t seed) {
  auto tags = split_tags(activities, n_users, fraction, seed);
  SplitDataset out;
  out.seed = seed;
  for (std::size_t i = 0; i < activities.size(); ++i) {
    switch (tags[i]) {
      case SplitTag::kTrain: out.train.push_back(activities[i]); break;
      case SplitTag::kTestHome: out.test_home.push_back(activities[i]); break;
      case SplitTag::kTestOut: out.test_out.push_back(activities[i]); break;
    }
  }
  return out;
}

SplitDataset CorpusBundle::split_view() const {
  SplitDataset out;
  out.seed = seed;
  for (std::size_t i = 0; i < activities.size(); ++i) {
    switch (split_tags[i]) {
      case SplitTag::kTrain: out.train.push_back(activities[i]); break;
      case SplitTag::kTestHome: out.test_home.push_back(activities[i]); break;
      case SplitTag::kTestOut: out.test_out.push_back(activities[i]); break;
    }
  }
  return out;
}

CorpusBundle ingest(std::istream& checkins,
                    const std::unordered_map<std::string, GeoPoint>& explicit_homes,
                    const IngestOptions& opts) {
  ParseResult parsed = parse_checkins(checkins);

  CorpusBundle bundle;
  bundle.pyramid = opts.pyramid;
  bundle.d_km = opts.d_km;
  bundle.split_fraction = opts.split_fraction;
  bundle.seed = opts.seed;
  bundle.stats.malformed_skipped = static_cast<std::uint32_t>(parsed.malformed.size());

  Dictionaries& d = bundle.dicts;
  auto intern = [](std::unordered_map<std::string, std::int32_t>& ids,
                   std::vector<std::string>& names, const std::string& s) {
    auto it = ids.find(s);
    if (it != ids.end()) return it->second;
    auto id = static_cast<std::int32_t>(names.size());
    names.push_back(s);
    ids.emplace(s, id);
    return id;
  };

  for (const auto& rec : parsed.records) {
    if (!opts.pyramid.bbox.contains(rec.location)) {
      ++bundle.stats.dropped_out_of_bbox;
      continue;
    }
    std::int32_t user = intern(d.user_ids, d.users, rec.user);
    bool new_item = d.item_ids.find(rec.item) == d.item_ids.end();
    std::int32_t item = intern(d.item_ids, d.items, rec.item);
    if (new_item) {
      d.item_locations.push_back(rec.location);
      std::vector<std::int32_t> word_ids;
      word_ids.reserve(rec.words.size());
      for (const auto& w : rec.words) word_ids.push_back(intern(d.vocab_ids, d.vocab, w));
      d.item_words.push_back(std::move(word_ids));
    } else if (d.item_locations[static_cast<std::size_t>(item)] != rec.location) {
      ++bundle.stats.location_conflicts;  // first occurrence wins
    }
    UserActivity act;
    act.user = user;
    act.item = item;
    act.location = rec.location;
    act.words = d.item_words[static_cast<std::size_t>(item)];
    act.role = rec.role;  // provisional; distance rule decides below
    bundle.activities.push_back(std::move(act));
  }

  // Homes from all pre-split data, then roles from the distance rule.
  const auto n_users = static_cast<std::size_t>(d.n_users());
  std::vector<std::vector<UserActivity>> per_user(n_users);
  for (const auto& a : bundle.activities) per_user[static_cast<std::size_t>(a.user)].push_back(a);

  bundle.homes.resize(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    std::optional<GeoPoint> explicit_home;
    auto it = explicit_homes.find(d.users[u]);
    if (it != explicit_homes.end()) explicit_home = it->second;
    bundle.homes[u] = infer_home(per_user[u], opts.pyramid, explicit_home);
  }
  for (auto& a : bundle.activities) {
    std::int8_t derived =
        haversine_km(bundle.homes[static_cast<std::size_t>(a.user)], a.location) > opts.d_km ? 1
                                                                                             : 0;
    if (a.role >= 0 && a.role != derived) ++bundle.stats.role_mismatches;
    a.role = derived;
  }

  bundle.split_tags = split_tags(bundle.activities, d.n_users(), opts.split_fraction, opts.seed);
  return bundle;
}

std::unordered_map<std::string, GeoPoint> parse_homes(std::istream& in) {
  std::unordered_map<std::string, GeoPoint> homes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_on(line, '\t');
    double lat = 0.0, lon = 0.0;
    if (fields.size() != 2 || fields[0].empty() || !parse_latlon(fields[1], lat, lon)) {
      throw ParseError("homes file line " + std::to_string(line_no) +
                       ": expected 'user<TAB>lat,lon'");
    }
    homes[fields[0]] = GeoPoint(lat, lon);
  }
  return homes;
}

namespace {

void write_point(BinaryWriter& w, const GeoPoint& p) {
  w.f64(p.lat);
  w.f64(p.lon);
}

GeoPoint read_point(BinaryReader& r) {
  double lat = r.f64();
  double lon = r.f64();
  return GeoPoint(lat, lon);
}

}  // namespace

void save_corpus(const CorpusBundle& bundle, std::ostream& out) {
  BinaryWriter w(out);
  w.magic(kCorpusMagic);
  write_point(w, bundle.pyramid.bbox.min);
  write_point(w, bundle.pyramid.bbox.max);
  w.u32(static_cast<std::uint32_t>(bundle.pyramid.height));
  w.f64(bundle.d_km);
  w.f64(bundle.split_fraction);
  w.u64(bundle.seed);
  w.u64(dict_hash(bundle.dicts));

  const Dictionaries& d = bundle.dicts;
  w.u32(static_cast<std::uint32_t>(d.users.size()));
  for (const auto& s : d.users) w.str(s);
  w.u32(static_cast<std::uint32_t>(d.items.size()));
  for (std::size_t i = 0; i < d.items.size(); ++i) {
    w.str(d.items[i]);
    write_point(w, d.item_locations[i]);
    w.u32(static_cast<std::uint32_t>(d.item_words[i].size()));
    for (auto word : d.item_words[i]) w.i32(word);
  }
  w.u32(static_cast<std::uint32_t>(d.vocab.size()));
  for (const auto& s : d.vocab) w.str(s);

  for (const auto& home : bundle.homes) write_point(w, home);

  w.u32(static_cast<std::uint32_t>(bundle.activities.size()));
  for (std::size_t i = 0; i < bundle.activities.size(); ++i) {
    const UserActivity& a = bundle.activities[i];
    w.i32(a.user);
    w.i32(a.item);
    write_point(w, a.location);
    w.u8(static_cast<std::uint8_t>(a.role));
    w.u8(static_cast<std::uint8_t>(bundle.split_tags[i]));
  }

  w.u32(bundle.stats.malformed_skipped);
  w.u32(bundle.stats.dropped_out_of_bbox);
  w.u32(bundle.stats.role_mismatches);
  w.u32(bundle.stats.location_conflicts);
  w.magic(kEndMagic);
}

CorpusBundle load_corpus(std::istream& in) {
  BinaryReader r(in, "corpus");
  r.expect_magic(kCorpusMagic, /*version_gate=*/true);
  CorpusBundle bundle;
  GeoPoint lo = read_point(r);
  GeoPoint hi = read_point(r);
  auto height = static_cast<std::int32_t>(r.u32());
  bundle.pyramid = PyramidConfig(BoundingBox(lo, hi), height);
  bundle.d_km = r.f64();
  bundle.split_fraction = r.f64();
  bundle.seed = r.u64();
  std::uint64_t stored_hash = r.u64();

  Dictionaries& d = bundle.dicts;
  std::uint32_t n_users = r.u32();
  d.users.reserve(n_users);
  for (std::uint32_t i = 0; i < n_users; ++i) {
    d.users.push_back(r.str());
    d.user_ids.emplace(d.users.back(), static_cast<std::int32_t>(i));
  }
  std::uint32_t n_items = r.u32();
  d.items.reserve(n_items);
  for (std::uint32_t i = 0; i < n_items; ++i) {
    d.items.push_back(r.str());
    d.item_ids.emplace(d.items.back(), static_cast<std::int32_t>(i));
    d.item_locations.push_back(read_point(r));
    std::uint32_t n_words = r.u32();
    std::vector<std::int32_t> words(n_words);
    for (auto& word : words) word = r.i32();
    d.item_words.push_back(std::move(words));
  }
  std::uint32_t n_vocab = r.u32();
  d.vocab.reserve(n_vocab);
  for (std::uint32_t i = 0; i < n_vocab; ++i) {
    d.vocab.push_back(r.str());
    d.vocab_ids.emplace(d.vocab.back(), static_cast<std::int32_t>(i));
  }
  if (dict_hash(d) != stored_hash) r.fail("dictionary hash mismatch");

  bundle.homes.resize(n_users);
  for (auto& home : bundle.homes) home = read_point(r);

  std::uint32_t n_acts = r.u32();
  bundle.activities.reserve(n_acts);
  bundle.split_tags.reserve(n_acts);
  for (std::uint32_t i = 0; i < n_acts; ++i) {
    UserActivity a;
    a.user = r.i32();
    a.item = r.i32();
    a.location = read_point(r);
    a.role = static_cast<std::int8_t>(r.u8());
    std::uint8_t tag = r.u8();
    if (a.user < 0 || a.user >= d.n_users() || a.item < 0 || a.item >= d.n_items() ||
        (a.role != 0 && a.role != 1) || tag > 2) {
      r.fail("activity record out of range");
    }
    a.words = d.item_words[static_cast<std::size_t>(a.item)];
    bundle.activities.push_back(std::move(a));
    bundle.split_tags.push_back(static_cast<SplitTag>(tag));
  }

  bundle.stats.malformed_skipped = r.u32();
  bundle.stats.dropped_out_of_bbox = r.u32();
  bundle.stats.role_mismatches = r.u32();
  bundle.stats.location_conflicts = r.u32();
  r.expect_magic(kEndMagic);
  return bundle;
}

std::vector<std::vector<std::int32_t>> training_visits(const CorpusBundle& bundle) {
  std::vector<std::vector<std::int32_t>> visits(static_cast<std::size_t>(bundle.dicts.n_users()));
  for (std::size_t i = 0; i < bundle.activities.size(); ++i) {
    if (bundle.split_tags[i] == SplitTag::kTrain) {
      visits[static_cast<std::size_t>(bundle.activities[i].user)].push_back(
          bundle.activities[i].item);
    }
  }
  for (auto& v : visits) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return visits;
}

std::vector<std::int32_t> training_activity_counts(const CorpusBundle& bundle) {
  std::vector<std::int32_t> counts(static_cast<std::size_t>(bundle.dicts.n_users()), 0);
  for (std::size_t i = 0; i < bundle.activities.size(); ++i) {
    if (bundle.split_tags[i] == SplitTag::kTrain)
      ++counts[static_cast<std::size_t>(bundle.activities[i].user)];
  }
  return counts;
}

}  // namespace geosage
